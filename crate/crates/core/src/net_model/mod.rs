//! Grid data model: buses, branches, generators and loads in per-unit.

mod case_format;
mod topology;

pub use case_format::{parse_case, write_case};
pub use topology::{connected_components, deenergize, extract_slack_island, retain_slack_island, Island};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shedding cost multiplier applied to the most expensive generator when a
/// load record leaves `shed_cost` blank.
pub const DEFAULT_SHED_COST_FACTOR: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("no bus section")]
    NoBusSection,
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown bus {bus}")]
    UnknownBus { line: usize, bus: u32 },
    #[error("line {line}: duplicate bus id {bus}")]
    DuplicateBus { line: usize, bus: u32 },
    #[error("line {line}: branch {from}-{to} has zero reactance")]
    ZeroReactance { line: usize, from: u32, to: u32 },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Pv => "pv",
            BusKind::Pq => "pq",
        }
    }
}

impl std::str::FromStr for BusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slack" => Ok(BusKind::Slack),
            "pv" => Ok(BusKind::Pv),
            "pq" => Ok(BusKind::Pq),
            other => Err(format!("unknown bus kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Voltage set-point (p.u.), meaningful for PV and slack buses.
    pub v_set: f64,
    pub v_init: f64,
    /// Radians.
    pub theta_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b_charge: f64,
    /// Thermal limit in p.u. on the system base.
    pub rate: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Linear cost per p.u. of output.
    pub cost: f64,
    pub in_service: bool,
}

/// Loads are stored consumption-positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: u32,
    pub p_demand: f64,
    pub q_demand: f64,
    /// Cost per p.u. of unserved demand.
    pub shed_cost: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
}

impl Network {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Number of in-service branches.
    pub fn n_branch(&self) -> usize {
        self.branches.iter().filter(|b| b.in_service).count()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    pub fn n_load(&self) -> usize {
        self.loads.len()
    }

    /// Position of the bus with the given id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Map from bus id to position; callers doing many lookups should use this.
    pub fn bus_lookup(&self) -> std::collections::HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    pub fn max_gen_cost(&self) -> f64 {
        self.generators.iter().map(|g| g.cost).fold(0.0, f64::max)
    }

    pub fn total_demand(&self) -> f64 {
        self.loads.iter().filter(|l| l.in_service).map(|l| l.p_demand).sum()
    }

    /// Check the structural invariants that every solver relies on.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::Invalid("base_mva must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.buses {
            if !seen.insert(b.id) {
                return Err(CaseError::Invalid(format!("duplicate bus id {}", b.id)));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(CaseError::Invalid(format!("expected exactly one slack bus, found {slacks}")));
        }
        let known = |id: u32| seen.contains(&id);
        for (i, br) in self.branches.iter().enumerate() {
            if !known(br.from_bus) || !known(br.to_bus) {
                return Err(CaseError::Invalid(format!("branch {i} references an unknown bus")));
            }
            if br.x == 0.0 {
                return Err(CaseError::Invalid(format!("branch {i} has zero reactance")));
            }
            if !(br.rate > 0.0) {
                return Err(CaseError::Invalid(format!("branch {i} has non-positive rate")));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if !known(g.bus) {
                return Err(CaseError::Invalid(format!("generator {i} references an unknown bus")));
            }
            if g.p_min > g.p_max {
                return Err(CaseError::Invalid(format!("generator {i} has p_min > p_max")));
            }
            if g.cost < 0.0 {
                return Err(CaseError::Invalid(format!("generator {i} has negative cost")));
            }
        }
        let max_cost = self.max_gen_cost();
        for (i, l) in self.loads.iter().enumerate() {
            if !known(l.bus) {
                return Err(CaseError::Invalid(format!("load {i} references an unknown bus")));
            }
            if !(l.p_demand > 0.0) {
                return Err(CaseError::Invalid(format!("load {i} has non-positive demand")));
            }
            if !(l.shed_cost > max_cost) {
                return Err(CaseError::Invalid(format!(
                    "load {i} shed_cost {} must exceed the largest generator cost {max_cost}",
                    l.shed_cost
                )));
            }
        }
        Ok(())
    }
}
