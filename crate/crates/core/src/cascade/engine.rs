use rand::Rng;

use super::state::{build_state, expand_solution, StateVector};
use super::{
    stage_reward, AttackMode, CascadeError, CollapseCause, EngineConfig, EpisodeResult, GenerationOutcome,
    StageOutcome, Terminal, TripMode, TRIP_THRESHOLD,
};
use crate::agent::{action_to_alpha, Transition};
use crate::dcopf::{run_dcopf, DispatchResult};
use crate::net_model::{deenergize, extract_slack_island, Island, Network};
use crate::pf::{ac_power_flow, ac_power_flow_with, AcOptions, PfSolution};

/// Pick the branch to attack, or `None` when no branch is in service.
/// `loading` is indexed by branch position and only used in
/// [`AttackMode::Important`], which does not consume randomness.
pub fn choose_attack<R: Rng + ?Sized>(net: &Network, mode: AttackMode, loading: &[f64], rng: &mut R) -> Option<usize> {
    let live: Vec<usize> = (0..net.branches.len()).filter(|&i| net.branches[i].in_service).collect();
    if live.is_empty() {
        return None;
    }
    match mode {
        AttackMode::Uniform => Some(live[rng.gen_range(0..live.len())]),
        AttackMode::Important => {
            let mut best = live[0];
            for &i in &live[1..] {
                if loading.get(i).copied().unwrap_or(0.0) > loading.get(best).copied().unwrap_or(0.0) {
                    best = i;
                }
            }
            Some(best)
        }
    }
}

/// Remove one uniformly chosen in-service branch and de-energize whatever
/// is no longer connected to the slack bus.
pub fn apply_attack<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Result<(Network, usize), CascadeError> {
    let b = choose_attack(net, AttackMode::Uniform, &[], rng).ok_or(CascadeError::NoBranches)?;
    let mut out = net.clone();
    out.branches[b].in_service = false;
    deenergize(&mut out)?;
    Ok((out, b))
}

/// Result of one generation on a full-size network.
#[derive(Debug, Clone)]
pub struct GenerationStep {
    pub outcome: GenerationOutcome,
    /// The network after trips and islanding.
    pub net: Network,
    /// Converged AC solution scattered onto the full network.
    pub pf: Option<PfSolution>,
    /// Feasible dispatch indexed like the full network's records.
    pub dispatch: Option<DispatchResult>,
}

fn expand_dispatch(island: &Island, d: &DispatchResult, full: &Network) -> DispatchResult {
    let mut p_gen = vec![0.0; full.generators.len()];
    for (k, &i) in island.gen_index.iter().enumerate() {
        p_gen[i] = d.p_gen[k];
    }
    let mut p_load_served = vec![0.0; full.loads.len()];
    for (k, &i) in island.load_index.iter().enumerate() {
        p_load_served[i] = d.p_load_served[k];
    }
    DispatchResult { p_gen, p_load_served, ..d.clone() }
}

/// DCOPF at `alpha`, AC check, then trip overloaded branches (against their
/// unscaled rating) and de-energize any islands this creates.
pub fn run_generation(net: &Network, alpha: f64, trip_mode: TripMode) -> GenerationStep {
    let infeasible = |net: &Network| GenerationStep {
        outcome: GenerationOutcome {
            dcopf_feasible: false,
            acpf_converged: None,
            overlimit_lines: None,
            tripped: Vec::new(),
            objective: None,
            islanded_demand: 0.0,
        },
        net: net.clone(),
        pf: None,
        dispatch: None,
    };
    let Ok(island) = extract_slack_island(net) else {
        return infeasible(net);
    };
    let dispatch = match run_dcopf(&island.net, alpha) {
        Ok(d) if d.feasible => d,
        _ => return infeasible(net),
    };
    let objective = Some(dispatch.objective);
    let sol = ac_power_flow(&island.net, &dispatch);
    let dispatch = Some(expand_dispatch(&island, &dispatch, net));
    if !sol.converged {
        return GenerationStep {
            outcome: GenerationOutcome {
                dcopf_feasible: true,
                acpf_converged: Some(false),
                overlimit_lines: None,
                tripped: Vec::new(),
                objective,
                islanded_demand: 0.0,
            },
            net: net.clone(),
            pf: None,
            dispatch,
        };
    }
    let pf = expand_solution(&island, &sol, net);
    let over = pf.overloaded(TRIP_THRESHOLD);
    let tripped = match trip_mode {
        TripMode::All => over.clone(),
        TripMode::WorstFirst => {
            // first index wins ties
            let worst = over.iter().copied().fold(None, |best: Option<usize>, i| match best {
                Some(b) if pf.loading[b] >= pf.loading[i] => Some(b),
                _ => Some(i),
            });
            worst.into_iter().collect()
        }
    };
    let mut next = net.clone();
    for &b in &tripped {
        next.branches[b].in_service = false;
    }
    let islanded_demand = if tripped.is_empty() { 0.0 } else { deenergize(&mut next).unwrap_or(0.0) };
    GenerationStep {
        outcome: GenerationOutcome {
            dcopf_feasible: true,
            acpf_converged: Some(true),
            overlimit_lines: Some(over.len()),
            tripped,
            objective,
            islanded_demand,
        },
        net: next,
        pf: Some(pf),
        dispatch,
    }
}

/// Result of one stage on a full-size network.
#[derive(Debug, Clone)]
pub struct StageRun {
    pub outcome: StageOutcome,
    pub net: Network,
    /// Last converged AC solution of the stage.
    pub pf: Option<PfSolution>,
    /// Last feasible dispatch of the stage.
    pub dispatch: Option<DispatchResult>,
}

/// Run generations at a fixed `alpha` until equilibrium, a failure, or `cap`
/// generations. The attack must already have been applied.
pub fn run_stage(net: &Network, alpha: f64, cap: usize, trip_mode: TripMode, is_last_stage: bool) -> StageRun {
    let mut current = net.clone();
    let mut generations = Vec::new();
    let mut pf = None;
    let mut dispatch = None;
    let mut islanded_demand = 0.0;
    let mut terminal = Terminal::Collapse;
    let mut cause = Some(CollapseCause::GenerationCap);
    let mut stage_cost = 0.0;
    for _ in 0..cap {
        let step = run_generation(&current, alpha, trip_mode);
        current = step.net;
        if step.pf.is_some() {
            pf = step.pf;
        }
        if step.dispatch.is_some() {
            dispatch = step.dispatch;
        }
        let o = step.outcome;
        islanded_demand += o.islanded_demand;
        let (feasible, converged, over, objective) =
            (o.dcopf_feasible, o.acpf_converged, o.overlimit_lines, o.objective);
        generations.push(o);
        if !feasible {
            cause = Some(CollapseCause::DcopfInfeasible);
            break;
        }
        if converged != Some(true) {
            cause = Some(CollapseCause::AcpfDiverged);
            break;
        }
        if over == Some(0) {
            terminal = Terminal::Equilibrium;
            cause = None;
            stage_cost = objective.unwrap_or(0.0);
            break;
        }
    }
    let reward = stage_reward(terminal, stage_cost, is_last_stage);
    StageRun {
        outcome: StageOutcome {
            attacked: None,
            alpha,
            generations,
            terminal,
            cause,
            stage_cost,
            reward,
            islanded_demand,
        },
        net: current,
        pf,
        dispatch,
    }
}

/// A base case prepared for repeated episodes.
#[derive(Debug, Clone)]
pub struct Environment {
    base: Network,
    config: EngineConfig,
    base_dispatch: DispatchResult,
    base_pf: PfSolution,
    base_state: StateVector,
}

impl Environment {
    /// Solve the base case once: DCOPF at α = 1 and its AC power flow, which
    /// must converge.
    pub fn new(base: &Network, config: EngineConfig) -> Result<Self, CascadeError> {
        let mut base = base.clone();
        deenergize(&mut base)?;
        let island = extract_slack_island(&base)?;
        let dispatch = match run_dcopf(&island.net, 1.0) {
            Ok(d) if d.feasible => d,
            _ => return Err(CascadeError::BaseCaseInfeasible),
        };
        let sol = ac_power_flow(&island.net, &dispatch);
        if !sol.converged {
            return Err(CascadeError::BaseCaseDiverged);
        }
        let base_pf = expand_solution(&island, &sol, &base);
        let base_dispatch = expand_dispatch(&island, &dispatch, &base);
        let base_state = build_state(&base_pf, &base);
        Ok(Environment { base, config, base_dispatch, base_pf, base_state })
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.base_state.dim()
    }

    pub fn base_state(&self) -> &StateVector {
        &self.base_state
    }

    pub fn base_solution(&self) -> &PfSolution {
        &self.base_pf
    }

    /// Start an episode on a fresh copy of the base network and apply the
    /// first attack. `rng` drives the attacks only.
    pub fn reset<R: Rng>(&self, rng: R) -> Episode<'_, R> {
        let mut ep = Episode {
            env: self,
            rng,
            net: self.base.clone(),
            dispatch: self.base_dispatch.clone(),
            last_pf: self.base_pf.clone(),
            state: self.base_state.clone(),
            stage: 0,
            attacked: None,
            attack_islanded: 0.0,
            stages: Vec::new(),
            transitions: Vec::new(),
            total_reward: 0.0,
            done: false,
        };
        ep.begin_stage();
        ep
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
    pub terminal: Terminal,
}

/// One episode in progress. Each [`Episode::step`] plays one stage.
#[derive(Debug)]
pub struct Episode<'a, R> {
    env: &'a Environment,
    rng: R,
    net: Network,
    dispatch: DispatchResult,
    last_pf: PfSolution,
    state: StateVector,
    stage: usize,
    attacked: Option<usize>,
    attack_islanded: f64,
    stages: Vec<StageOutcome>,
    transitions: Vec<Transition>,
    total_reward: f64,
    done: bool,
}

impl<R: Rng> Episode<'_, R> {
    /// Attack, then observe the post-attack grid under the previous dispatch.
    /// If that AC solve diverges the previous state is kept.
    fn begin_stage(&mut self) {
        let cfg = self.env.config;
        self.attacked = choose_attack(&self.net, cfg.attack_mode, &self.last_pf.loading, &mut self.rng);
        self.attack_islanded = 0.0;
        let Some(b) = self.attacked else {
            return;
        };
        self.net.branches[b].in_service = false;
        self.attack_islanded = deenergize(&mut self.net).unwrap_or(0.0);
        let Ok(island) = extract_slack_island(&self.net) else {
            return;
        };
        let p_gen: Vec<f64> = island
            .gen_index
            .iter()
            .map(|&i| if self.net.generators[i].in_service { self.dispatch.p_gen[i] } else { 0.0 })
            .collect();
        let p_load: Vec<f64> = island
            .load_index
            .iter()
            .map(|&i| if self.net.loads[i].in_service { self.dispatch.p_load_served[i] } else { 0.0 })
            .collect();
        let sol = ac_power_flow_with(&island.net, &p_gen, &p_load, AcOptions::default());
        if sol.converged {
            self.last_pf = expand_solution(&island, &sol, &self.net);
            self.state = build_state(&self.last_pf, &self.net);
        }
    }

    pub fn observation(&self) -> &StateVector {
        &self.state
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn stage_index(&self) -> usize {
        self.stage
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Play the current stage with the candidate at `action_index`.
    pub fn step(&mut self, action_index: usize) -> Result<StepResult, CascadeError> {
        if self.done {
            return Err(CascadeError::Finished);
        }
        let alpha = action_to_alpha(action_index).ok_or(CascadeError::BadAction(action_index))?;
        let cfg = self.env.config;
        let is_last = self.stage + 1 >= cfg.stages;
        let run = run_stage(&self.net, alpha, cfg.generation_cap, cfg.trip_mode, is_last);
        self.net = run.net;
        if let Some(d) = run.dispatch {
            self.dispatch = d;
        }
        if let Some(pf) = run.pf {
            self.last_pf = pf;
        }
        let mut outcome = run.outcome;
        outcome.attacked = self.attacked;
        outcome.islanded_demand += self.attack_islanded;
        let terminal = outcome.terminal;
        let reward = outcome.reward;
        self.total_reward += reward;
        self.stages.push(outcome);

        let prev = std::mem::replace(&mut self.state, build_state(&self.last_pf, &self.net));
        self.done = terminal == Terminal::Collapse || is_last;
        if !self.done {
            self.stage += 1;
            self.begin_stage();
        }
        self.transitions.push(Transition {
            state: prev.values,
            action_index,
            reward,
            next_state: self.state.values.clone(),
            next_action_index: None,
            done: self.done,
        });
        Ok(StepResult { reward, next_state: self.state.clone(), done: self.done, terminal })
    }

    pub fn finish(self) -> EpisodeResult {
        let won = self.done
            && self.stages.len() == self.env.config.stages
            && self.stages.iter().all(|s| s.terminal == Terminal::Equilibrium);
        EpisodeResult { stages: self.stages, won, total_reward: self.total_reward, transitions: self.transitions }
    }
}

/// Play a whole episode, asking `policy` for an action index at every stage.
pub fn run_episode<R, P>(env: &Environment, mut policy: P, rng: R) -> Result<EpisodeResult, CascadeError>
where
    R: Rng,
    P: FnMut(&StateVector) -> usize,
{
    let mut ep = env.reset(rng);
    while !ep.is_done() {
        let a = policy(ep.observation());
        ep.step(a)?;
    }
    Ok(ep.finish())
}
