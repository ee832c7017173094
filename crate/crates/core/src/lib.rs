//! Multi-stage cascading failure simulation with DCOPF corrective control
//! and temporal-difference agents that choose the branch-flow-limit scale.

pub mod agent;
pub mod cascade;
pub mod dcopf;
pub mod harness;
pub mod linalg;
pub mod net_model;
pub mod pf;

pub use dcopf::{run_dcopf, DispatchResult};
pub use net_model::{parse_case, write_case, Network};
pub use pf::{ac_power_flow, PfSolution};
