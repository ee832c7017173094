use serde::Serialize;

use super::{InjectionVector, PfError};
use crate::linalg::Lu;
use crate::net_model::Network;

/// Factored reduced susceptance matrix of a connected network.
#[derive(Debug, Clone)]
pub struct DcModel {
    n: usize,
    slack: usize,
    lu: Lu,
    /// (from, to, 1/x) per branch position; `None` for out-of-service.
    ends: Vec<Option<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcFlow {
    pub theta: Vec<f64>,
    pub flow: Vec<f64>,
}

impl DcModel {
    pub fn new(net: &Network) -> Result<Self, PfError> {
        let slack = net.slack_index().ok_or(PfError::NoSlack)?;
        Self::with_reference(net, slack)
    }

    /// Angle reference at bus position `slack`.
    pub fn with_reference(net: &Network, slack: usize) -> Result<Self, PfError> {
        let n = net.n_bus();
        if slack >= n {
            return Err(PfError::NoSlack);
        }
        let lookup = net.bus_lookup();
        let mut b = vec![0.0; n * n];
        let mut ends = Vec::with_capacity(net.branches.len());
        for br in &net.branches {
            if !br.in_service {
                ends.push(None);
                continue;
            }
            let (f, t) = (lookup[&br.from_bus], lookup[&br.to_bus]);
            let s = 1.0 / br.x;
            b[f * n + f] += s;
            b[t * n + t] += s;
            b[f * n + t] -= s;
            b[t * n + f] -= s;
            ends.push(Some((f, t, s)));
        }
        let m = n - 1;
        let mut reduced = Vec::with_capacity(m * m);
        for i in (0..n).filter(|&i| i != slack) {
            for j in (0..n).filter(|&j| j != slack) {
                reduced.push(b[i * n + j]);
            }
        }
        let lu = Lu::factor(reduced, m).map_err(|_| PfError::Singular)?;
        Ok(DcModel { n, slack, lu, ends })
    }

    pub fn n_bus(&self) -> usize {
        self.n
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Bus angles with the slack at zero.
    pub fn angles(&self, p: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = p.iter().enumerate().filter(|&(i, _)| i != self.slack).map(|(_, &v)| v).collect();
        let sol = self.lu.solve(&rhs);
        let mut theta = Vec::with_capacity(self.n);
        let mut it = sol.into_iter();
        for i in 0..self.n {
            theta.push(if i == self.slack { 0.0 } else { it.next().unwrap_or(0.0) });
        }
        theta
    }

    pub fn flows(&self, theta: &[f64]) -> Vec<f64> {
        self.ends
            .iter()
            .map(|e| match *e {
                Some((f, t, s)) => (theta[f] - theta[t]) * s,
                None => 0.0,
            })
            .collect()
    }

    pub(crate) fn branch_ends(&self) -> &[Option<(usize, usize, f64)>] {
        &self.ends
    }
}

/// Solve `B θ = p` with the slack angle fixed at zero and return branch flows
/// `(θ_from − θ_to) / x`.
pub fn dc_power_flow(net: &Network, inj: &InjectionVector) -> Result<DcFlow, PfError> {
    if inj.p.len() != net.n_bus() {
        return Err(PfError::Dimension { expected: net.n_bus(), got: inj.p.len() });
    }
    let model = DcModel::new(net)?;
    let theta = model.angles(&inj.p);
    let flow = model.flows(&theta);
    Ok(DcFlow { theta, flow })
}
