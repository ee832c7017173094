//! Training and evaluation orchestration: run configuration, seeded random
//! streams, the agent wrapper, metrics and report files.

mod metrics;
mod run;

pub use metrics::{
    emit_reports, moving_average, render_svg, write_csv, Aggregates, EpisodeRow, RunMetrics, Summary, CSV_HEADER,
    TAIL_EPISODES,
};
pub use run::{evaluate, evaluate_baseline, load_environment, play_greedy, train, Agent, EvalReport, TrainReport};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::CheckpointError;
use crate::cascade::{AttackMode, CascadeError, EngineConfig, TripMode};
use crate::net_model::CaseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Shallow network trained with SARSA.
    Shallow,
    /// Convolutional network trained with Q-learning.
    Deep,
    /// Uniform random action every stage.
    Random,
    /// Always α = 1.
    Fixed,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Shallow => "shallow",
            AgentKind::Deep => "deep",
            AgentKind::Random => "random",
            AgentKind::Fixed => "fixed",
        }
    }
}

/// Run configuration; the JSON form uses these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub agent_kind: AgentKind,
    pub episodes: usize,
    pub lr: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Episodes over which ε decays linearly; `None` means half the run.
    pub eps_decay_episodes: Option<usize>,
    pub stages: usize,
    pub generation_cap: usize,
    pub seed: u64,
    pub attack_mode: AttackMode,
    pub output_dir: PathBuf,
    /// Moving-average window for the reward plot.
    pub ma_window: usize,
    /// Evaluation threads; 0 uses every core.
    pub workers: usize,
    pub trip_mode: TripMode,
    /// Fill `wall_ms` in the episode CSV. Off by default so that the CSV is
    /// a pure function of the configuration.
    pub record_wall_ms: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case_path: PathBuf::from("cases/ieee118.case"),
            agent_kind: AgentKind::Deep,
            episodes: 10_000,
            lr: 1e-4,
            gamma: 0.7,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_episodes: None,
            stages: crate::cascade::DEFAULT_STAGES,
            generation_cap: crate::cascade::DEFAULT_GENERATION_CAP,
            seed: 0,
            attack_mode: AttackMode::Uniform,
            output_dir: PathBuf::from("runs/default"),
            ma_window: 1000,
            workers: 0,
            trip_mode: TripMode::All,
            record_wall_ms: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Config(msg.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        for (name, e) in [("eps_start", self.eps_start), ("eps_end", self.eps_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.stages == 0 || self.generation_cap == 0 {
            return bad("stages and generation_cap must be at least 1");
        }
        if self.ma_window == 0 {
            return bad("ma_window must be at least 1");
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            stages: self.stages,
            generation_cap: self.generation_cap,
            attack_mode: self.attack_mode,
            trip_mode: self.trip_mode,
        }
    }

    pub fn decay_episodes(&self) -> usize {
        self.eps_decay_episodes.unwrap_or(self.episodes / 2)
    }

    /// Linear decay from `eps_start` to `eps_end`, then constant.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = self.decay_episodes();
        if episode >= horizon {
            return self.eps_end;
        }
        let f = episode as f64 / horizon as f64;
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}

/// Independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Attack = 1,
    Explore = 2,
    Init = 3,
}

/// Generator for `(seed, stream, index)`; distinct triples never share
/// a keystream.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) | (index & ((1 << 40) - 1)));
    rng
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("case error: {0}")]
    Case(#[from] CaseError),
    #[error("case error: {0}")]
    BaseCase(CascadeError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("numerical failure in episode {episode}: {msg}")]
    Numerical { episode: usize, msg: String },
    #[error("output error: {0}")]
    Output(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Checkpoint(_) | HarnessError::Output(_) => 2,
            HarnessError::Case(_) | HarnessError::BaseCase(_) => 3,
            HarnessError::Numerical { .. } => 4,
        }
    }
}
