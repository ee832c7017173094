use num_complex::Complex64;

use super::PfError;
use crate::net_model::Network;

/// Dense complex nodal admittance matrix in bus order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ybus {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl Ybus {
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }
}

/// Series admittance and half charging of a branch.
pub(crate) fn branch_admittance(r: f64, x: f64, b: f64) -> (Complex64, Complex64) {
    let y = Complex64::new(1.0, 0.0) / Complex64::new(r, x);
    (y, Complex64::new(0.0, b / 2.0))
}

/// Pi-model admittance matrix of the in-service branches.
pub fn build_ybus(net: &Network) -> Result<Ybus, PfError> {
    let n = net.n_bus();
    let lookup = net.bus_lookup();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    for (l, br) in net.branches.iter().enumerate().filter(|(_, b)| b.in_service) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(PfError::ZeroImpedance(l));
        }
        let (f, t) = (lookup[&br.from_bus], lookup[&br.to_bus]);
        let (y, sh) = branch_admittance(br.r, br.x, br.b_charge);
        data[f * n + f] += y + sh;
        data[t * n + t] += y + sh;
        data[f * n + t] -= y;
        data[t * n + f] -= y;
    }
    Ok(Ybus { n, data })
}
