use std::hash::{Hash, Hasher};

use serde::Serialize;

use super::DcopfError;
use crate::net_model::Network;
use crate::pf::{DcModel, PfError};

/// Power transfer distribution factors: branch flow per unit injection at a
/// bus, withdrawn at the slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ptdf {
    /// `matrix[branch][bus]`; out-of-service rows and the slack column are zero.
    pub matrix: Vec<Vec<f64>>,
    pub slack: usize,
    pub topology: u64,
}

impl Ptdf {
    /// Flows for a balanced injection vector.
    pub fn flows(&self, p: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|row| row.iter().zip(p).map(|(a, b)| a * b).sum()).collect()
    }

    /// True when `net` still has the topology this matrix was built for.
    pub fn is_current(&self, net: &Network) -> bool {
        topology_hash(net) == self.topology
    }
}

/// Hash of everything the PTDF depends on: bus order and in-service branch
/// endpoints and reactances.
pub fn topology_hash(net: &Network) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for b in &net.buses {
        b.id.hash(&mut h);
    }
    for br in &net.branches {
        br.in_service.hash(&mut h);
        if br.in_service {
            br.from_bus.hash(&mut h);
            br.to_bus.hash(&mut h);
            br.x.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

pub fn build_ptdf(net: &Network, slack: u32) -> Result<Ptdf, DcopfError> {
    let slack_pos = net.bus_index(slack).ok_or(DcopfError::Pf(PfError::NoSlack))?;
    let model = DcModel::with_reference(net, slack_pos)?;
    let n = net.n_bus();
    let mut matrix = vec![vec![0.0; n]; net.branches.len()];
    let mut unit = vec![0.0; n];
    for k in (0..n).filter(|&k| k != slack_pos) {
        unit[k] = 1.0;
        let theta = model.angles(&unit);
        for (l, e) in model.branch_ends().iter().enumerate() {
            if let Some((f, t, s)) = *e {
                matrix[l][k] = (theta[f] - theta[t]) * s;
            }
        }
        unit[k] = 0.0;
    }
    Ok(Ptdf { matrix, slack: slack_pos, topology: topology_hash(net) })
}
