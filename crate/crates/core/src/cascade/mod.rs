//! Multi-stage cascading failure engine.
//!
//! An episode is up to `K` stages. Each stage starts with an attack (one
//! branch removed), after which the agent picks a flow-limit scale α that is
//! held for every generation of the stage. A generation redispatches with
//! the DCOPF, checks the dispatch with an AC power flow and trips every
//! branch loaded above its rating. The stage ends in equilibrium once a
//! generation trips nothing, and in collapse when the DCOPF is infeasible,
//! the AC power flow diverges or the generation cap is reached.

mod engine;
mod state;

pub use engine::{
    apply_attack, choose_attack, run_episode, run_generation, run_stage, Environment, Episode, GenerationStep,
    StageRun, StepResult,
};
pub use state::{build_state, expand_solution, StateVector};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Transition;
use crate::net_model::CaseError;

pub const DEFAULT_STAGES: usize = 3;
pub const DEFAULT_GENERATION_CAP: usize = 20;
pub const COLLAPSE_REWARD: f64 = -1000.0;
pub const FINAL_STAGE_BONUS: f64 = 1000.0;
/// Relay threshold on `|flow| / rate`; never scaled by α.
pub const TRIP_THRESHOLD: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("no in-service branch left to attack")]
    NoBranches,
    #[error("base-case AC power flow does not converge")]
    BaseCaseDiverged,
    #[error("base-case DCOPF is infeasible")]
    BaseCaseInfeasible,
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("action index {0} out of range")]
    BadAction(usize),
    #[error("episode already finished")]
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Uniform over in-service branches.
    #[default]
    Uniform,
    /// The in-service branch with the highest loading in the current state.
    Important,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripMode {
    /// Every overloaded branch trips in the same generation.
    #[default]
    All,
    /// Only the most loaded branch trips per generation.
    WorstFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub stages: usize,
    pub generation_cap: usize,
    pub attack_mode: AttackMode,
    pub trip_mode: TripMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            stages: DEFAULT_STAGES,
            generation_cap: DEFAULT_GENERATION_CAP,
            attack_mode: AttackMode::Uniform,
            trip_mode: TripMode::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationOutcome {
    pub dcopf_feasible: bool,
    /// `None` when the DCOPF was infeasible and no AC solve was attempted.
    pub acpf_converged: Option<bool>,
    /// `None` unless the AC power flow converged.
    pub overlimit_lines: Option<usize>,
    /// Branch positions tripped in this generation.
    pub tripped: Vec<usize>,
    /// DCOPF objective when feasible.
    pub objective: Option<f64>,
    /// Demand de-energized by the islanding that followed the trips (p.u.).
    pub islanded_demand: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Equilibrium,
    Collapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseCause {
    DcopfInfeasible,
    AcpfDiverged,
    GenerationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    /// Branch attacked at the start of the stage, if any was left.
    pub attacked: Option<usize>,
    pub alpha: f64,
    pub generations: Vec<GenerationOutcome>,
    pub terminal: Terminal,
    pub cause: Option<CollapseCause>,
    /// Final DCOPF objective; only meaningful at equilibrium.
    pub stage_cost: f64,
    pub reward: f64,
    /// Demand lost to islanding during the stage, including the attack (p.u.).
    pub islanded_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub stages: Vec<StageOutcome>,
    pub won: bool,
    pub total_reward: f64,
    pub transitions: Vec<Transition>,
}

impl EpisodeResult {
    pub fn stages_completed(&self) -> usize {
        self.stages.iter().filter(|s| s.terminal == Terminal::Equilibrium).count()
    }

    /// One JSON record per generation, in the layout of the episode tables.
    pub fn trace(&self) -> Vec<TraceRecord> {
        let mut out = Vec::new();
        for (k, stage) in self.stages.iter().enumerate() {
            let last = stage.generations.len();
            for (g, gen) in stage.generations.iter().enumerate() {
                let result = if g + 1 < last {
                    "continue"
                } else {
                    match stage.terminal {
                        Terminal::Equilibrium => "equilibrium",
                        Terminal::Collapse => "collapse",
                    }
                };
                out.push(TraceRecord {
                    stage: k + 1,
                    generation: g + 1,
                    attacked: if g == 0 { stage.attacked } else { None },
                    alpha: stage.alpha,
                    dcopf_feasible: gen.dcopf_feasible,
                    acpf_converged: gen.acpf_converged,
                    overlimit_lines: gen.overlimit_lines,
                    tripped: gen.tripped.clone(),
                    result,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub generation: usize,
    pub attacked: Option<usize>,
    pub alpha: f64,
    pub dcopf_feasible: bool,
    pub acpf_converged: Option<bool>,
    pub overlimit_lines: Option<usize>,
    pub tripped: Vec<usize>,
    pub result: &'static str,
}

/// −1000 on collapse; −cost at equilibrium, plus 1000 on the last stage.
pub fn compute_stage_reward(outcome: &StageOutcome, is_last_stage: bool) -> f64 {
    stage_reward(outcome.terminal, outcome.stage_cost, is_last_stage)
}

pub(crate) fn stage_reward(terminal: Terminal, stage_cost: f64, is_last_stage: bool) -> f64 {
    match terminal {
        Terminal::Collapse => COLLAPSE_REWARD,
        Terminal::Equilibrium => {
            if stage_cost >= -COLLAPSE_REWARD {
                log::warn!("stage cost {stage_cost} exceeds the collapse penalty");
            }
            if is_last_stage {
                FINAL_STAGE_BONUS - stage_cost
            } else {
                -stage_cost
            }
        }
    }
}
