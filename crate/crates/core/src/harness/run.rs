use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::metrics::{emit_reports, EpisodeRow, RunMetrics, Summary};
use super::{stream_rng, AgentKind, HarnessError, RunConfig, Stream};
use crate::agent::{
    epsilon_greedy, q_update, sarsa_update, NetKind, Transition, ValueNet, IDENTITY_ACTION, N_ACTIONS, REWARD_SCALE,
};
use crate::cascade::{EngineConfig, Environment, EpisodeResult};
use crate::net_model::parse_case;

/// A policy plus, for the learning kinds, its value network.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Shallow(ValueNet),
    Deep(ValueNet),
    Random,
    Fixed,
}

impl Agent {
    /// Fresh agent; network weights come from the run's init stream.
    pub fn new(kind: AgentKind, state_dim: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, Stream::Init, 0);
        match kind {
            AgentKind::Shallow => Agent::Shallow(ValueNet::shallow(state_dim, &mut rng)),
            AgentKind::Deep => Agent::Deep(ValueNet::deep(state_dim, &mut rng)),
            AgentKind::Random => Agent::Random,
            AgentKind::Fixed => Agent::Fixed,
        }
    }

    /// Wrap a loaded network, checking it against the configured kind and
    /// the environment's state size.
    pub fn from_network(kind: AgentKind, net: ValueNet, state_dim: usize) -> Result<Self, HarnessError> {
        if net.input_dim() != state_dim || net.n_actions() != N_ACTIONS {
            return Err(HarnessError::Config(format!(
                "checkpoint expects {} inputs, the case produces {state_dim}",
                net.input_dim()
            )));
        }
        match (kind, net.kind()) {
            (AgentKind::Shallow, NetKind::Shallow) => Ok(Agent::Shallow(net)),
            (AgentKind::Deep, NetKind::Deep) => Ok(Agent::Deep(net)),
            (k, n) => {
                Err(HarnessError::Config(format!("checkpoint holds a {n:?} network, config asks for {}", k.as_str())))
            }
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Shallow(_) => AgentKind::Shallow,
            Agent::Deep(_) => AgentKind::Deep,
            Agent::Random => AgentKind::Random,
            Agent::Fixed => AgentKind::Fixed,
        }
    }

    pub fn network(&self) -> Option<&ValueNet> {
        match self {
            Agent::Shallow(n) | Agent::Deep(n) => Some(n),
            _ => None,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], eps: f64, rng: &mut R) -> usize {
        match self {
            Agent::Shallow(n) | Agent::Deep(n) => epsilon_greedy(&n.q_values(state), eps, rng),
            Agent::Random => rng.gen_range(0..N_ACTIONS),
            Agent::Fixed => IDENTITY_ACTION,
        }
    }

    /// SARSA for the shallow network, Q-learning for the deep one.
    pub fn learn(&mut self, t: &Transition, lr: f64, gamma: f64) {
        match self {
            Agent::Shallow(n) => {
                sarsa_update(n, t, lr, gamma);
            }
            Agent::Deep(n) => {
                q_update(n, t, lr, gamma);
            }
            _ => {}
        }
    }

    fn finite(&self) -> bool {
        self.network().map_or(true, |n| n.params().iter().all(|p| p.is_finite()))
    }
}

/// Parse the case and solve its base state.
pub fn load_environment(case_path: &Path, engine: EngineConfig) -> Result<Environment, HarnessError> {
    let text = std::fs::read_to_string(case_path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", case_path.display())))?;
    let net = parse_case(&text)?;
    Environment::new(&net, engine).map_err(HarnessError::BaseCase)
}

fn row(episode: usize, r: &EpisodeResult, eps: f64, started: Instant, record_wall: bool) -> EpisodeRow {
    EpisodeRow {
        episode,
        won: r.won,
        stages_completed: r.stages_completed(),
        total_reward: r.total_reward,
        epsilon: eps,
        wall_ms: if record_wall { started.elapsed().as_millis() as u64 } else { 0 },
    }
}

/// Play one episode, learning online from every transition when `learn`.
fn play(
    env: &Environment,
    agent: &mut Agent,
    cfg: &RunConfig,
    episode: usize,
    eps: f64,
    learn: bool,
) -> Result<EpisodeResult, HarnessError> {
    let numerical = |msg: String| HarnessError::Numerical { episode, msg };
    let mut explore = stream_rng(cfg.seed, Stream::Explore, episode as u64);
    let mut ep = env.reset(stream_rng(cfg.seed, Stream::Attack, episode as u64));
    let mut state = ep.observation().values.clone();
    let mut action = agent.act(&state, eps, &mut explore);
    loop {
        let step = ep.step(action).map_err(|e| numerical(e.to_string()))?;
        let next_action = if step.done { None } else { Some(agent.act(&step.next_state.values, eps, &mut explore)) };
        if learn {
            let t = Transition {
                state,
                action_index: action,
                reward: step.reward / REWARD_SCALE,
                next_state: step.next_state.values.clone(),
                next_action_index: next_action,
                done: step.done,
            };
            agent.learn(&t, cfg.lr, cfg.gamma);
            if !agent.finite() {
                return Err(numerical("network weights became non-finite".into()));
            }
        }
        match next_action {
            None => break,
            Some(a) => {
                state = step.next_state.values;
                action = a;
            }
        }
    }
    Ok(ep.finish())
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: RunMetrics,
    pub agent: Agent,
    pub summary: Summary,
    pub checkpoint: Option<PathBuf>,
}

/// Train sequentially for `cfg.episodes` episodes and write the reports
/// and, for network agents, `checkpoint.json` into `cfg.output_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    let env = load_environment(&cfg.case_path, cfg.engine())?;
    let mut agent = Agent::new(cfg.agent_kind, env.state_dim(), cfg.seed);
    let run_start = Instant::now();
    let mut metrics = RunMetrics::default();
    for e in 0..cfg.episodes {
        let eps = cfg.epsilon(e);
        let started = Instant::now();
        let r = play(&env, &mut agent, cfg, e, eps, true)?;
        metrics.rows.push(row(e, &r, eps, started, cfg.record_wall_ms));
        if (e + 1) % 500 == 0 {
            log::info!("episode {}: winning rate so far {:.3}", e + 1, metrics.winning_rate());
        }
    }
    let total_wall_ms = run_start.elapsed().as_millis() as u64;
    let summary = Summary::new(cfg.agent_kind.as_str(), cfg.seed, &metrics, total_wall_ms, None);
    emit_reports(&metrics, &summary, cfg.ma_window, &cfg.output_dir)?;
    let checkpoint = match agent.network() {
        Some(net) => {
            let path = cfg.output_dir.join("checkpoint.json");
            net.save(&path)?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainReport { metrics, agent, summary, checkpoint })
}

/// Greedy episodes `0..episodes` without learning, fanned out over
/// `workers` threads and merged by episode index.
pub fn play_greedy(env: &Environment, agent: &Agent, cfg: &RunConfig) -> Result<RunMetrics, HarnessError> {
    let job = || {
        (0..cfg.episodes)
            .into_par_iter()
            .map(|e| {
                let started = Instant::now();
                let mut local = agent.clone();
                play(env, &mut local, cfg, e, 0.0, false).map(|r| row(e, &r, 0.0, started, cfg.record_wall_ms))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let rows = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(job)?
    } else {
        job()?
    };
    Ok(RunMetrics { rows })
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub metrics: RunMetrics,
    pub baseline: RunMetrics,
    pub summary: Summary,
}

/// The random policy on the same attack sequences.
pub fn evaluate_baseline(env: &Environment, cfg: &RunConfig) -> Result<RunMetrics, HarnessError> {
    play_greedy(env, &Agent::Random, cfg)
}

/// Greedy evaluation of a checkpoint (or of a baseline kind, which needs
/// none). Reports go to `cfg.output_dir/eval`.
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let env = load_environment(&cfg.case_path, cfg.engine())?;
    let agent = match (cfg.agent_kind, checkpoint) {
        (AgentKind::Random | AgentKind::Fixed, _) => Agent::new(cfg.agent_kind, env.state_dim(), cfg.seed),
        (kind, Some(path)) => Agent::from_network(kind, ValueNet::load(path)?, env.state_dim())?,
        (kind, None) => {
            return Err(HarnessError::Config(format!("evaluating a {} agent needs a checkpoint", kind.as_str())))
        }
    };
    let start = Instant::now();
    let metrics = play_greedy(&env, &agent, cfg)?;
    let total_wall_ms = start.elapsed().as_millis() as u64;
    let baseline = evaluate_baseline(&env, cfg)?;
    let summary = Summary::new(cfg.agent_kind.as_str(), cfg.seed, &metrics, total_wall_ms, Some(&baseline));
    emit_reports(&metrics, &summary, cfg.ma_window, &cfg.output_dir.join("eval"))?;
    Ok(EvalReport { metrics, baseline, summary })
}
