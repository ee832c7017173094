//! Power-flow kernels: nodal admittance, the linear DC model and a polar
//! Newton-Raphson AC solver.

mod ac;
mod dc;
mod ybus;

pub use ac::{ac_power_flow, ac_power_flow_with, AcOptions};
pub use dc::{dc_power_flow, DcFlow, DcModel};
pub use ybus::{build_ybus, Ybus};

use serde::Serialize;
use thiserror::Error;

/// Newton iteration cap.
pub const MAX_NEWTON_ITERATIONS: usize = 30;
/// Mismatch tolerance in p.u.
pub const MISMATCH_TOLERANCE: f64 = 1e-6;
/// Number of PV→PQ re-typing passes per solve.
pub const MAX_RETYPE_PASSES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("susceptance matrix is singular; the network is disconnected (reduce it with retain_slack_island)")]
    Singular,
    #[error("branch {0} has zero series impedance")]
    ZeroImpedance(usize),
    #[error("network has no slack bus")]
    NoSlack,
    #[error("injection vector has {got} entries, network has {expected} buses")]
    Dimension { expected: usize, got: usize },
}

/// Net active injection per bus (p.u., generation-positive), in bus order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionVector {
    pub p: Vec<f64>,
}

impl InjectionVector {
    pub fn zeros(n: usize) -> Self {
        InjectionVector { p: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PfSolution {
    pub converged: bool,
    pub iterations: usize,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    /// Active power entering each branch at its from-end; zero when out of service.
    pub flow_from: Vec<f64>,
    /// `|flow_from| / rate`, zero when out of service.
    pub loading: Vec<f64>,
    pub max_mismatch: f64,
    /// PV buses that were switched to PQ at a reactive limit.
    pub q_clamped: Vec<bool>,
}

impl PfSolution {
    /// In-service branch positions loaded strictly above their rating.
    pub fn overloaded(&self, threshold: f64) -> Vec<usize> {
        self.loading.iter().enumerate().filter(|(_, &l)| l > threshold).map(|(i, _)| i).collect()
    }
}
