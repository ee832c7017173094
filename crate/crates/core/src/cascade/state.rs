use serde::{Deserialize, Serialize};

use crate::net_model::{Island, Network};
use crate::pf::PfSolution;

/// Per-branch loading followed by `V, θ, P, Q` for every bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(net: &Network) -> Self {
        StateVector { values: vec![0.0; state_dim(net)] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn loading(&self, n_branch: usize) -> &[f64] {
        &self.values[..n_branch]
    }
}

/// Length of the state vector: every branch record plus four entries per bus.
pub fn state_dim(net: &Network) -> usize {
    net.branches.len() + 4 * net.buses.len()
}

/// Flatten a power-flow solution sized like `net`. Out-of-service branches
/// contribute zero loading; buses keep whatever the solution holds, which
/// is zero for de-energized buses after [`expand_solution`].
pub fn build_state(sol: &PfSolution, net: &Network) -> StateVector {
    let mut values = Vec::with_capacity(state_dim(net));
    for (br, &l) in net.branches.iter().zip(&sol.loading) {
        values.push(if br.in_service { l.abs() } else { 0.0 });
    }
    for i in 0..net.buses.len() {
        values.extend_from_slice(&[sol.v[i], sol.theta[i], sol.p_inj[i], sol.q_inj[i]]);
    }
    StateVector { values }
}

/// Scatter a solution of `island.net` back onto the positions of `full`,
/// zero-filling everything outside the island.
pub fn expand_solution(island: &Island, sol: &PfSolution, full: &Network) -> PfSolution {
    let (nb, nl) = (full.buses.len(), full.branches.len());
    let mut out = PfSolution {
        converged: sol.converged,
        iterations: sol.iterations,
        v: vec![0.0; nb],
        theta: vec![0.0; nb],
        p_inj: vec![0.0; nb],
        q_inj: vec![0.0; nb],
        flow_from: vec![0.0; nl],
        loading: vec![0.0; nl],
        max_mismatch: sol.max_mismatch,
        q_clamped: vec![false; nb],
    };
    for (k, &i) in island.bus_index.iter().enumerate() {
        out.v[i] = sol.v[k];
        out.theta[i] = sol.theta[k];
        out.p_inj[i] = sol.p_inj[k];
        out.q_inj[i] = sol.q_inj[k];
        out.q_clamped[i] = sol.q_clamped[k];
    }
    for (k, &i) in island.branch_index.iter().enumerate() {
        out.flow_from[i] = sol.flow_from[k];
        out.loading[i] = sol.loading[k];
    }
    out
}
