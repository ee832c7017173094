use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use cascade_rl::agent::{ALPHAS, IDENTITY_ACTION};
use cascade_rl::cascade::{run_episode, EngineConfig, StageOutcome};
use cascade_rl::harness::{self, stream_rng, HarnessError, RunConfig, Stream};
use cascade_rl::net_model::{parse_case, Network};
use cascade_rl::{ac_power_flow, run_dcopf};

#[derive(Parser)]
#[command(name = "cascade-rl", version, about = "Cascading-failure mitigation with TD-learned flow-limit control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write episodes.csv, summary.json, reward_ma.svg and checkpoint.json.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Greedy evaluation; reports go to <output_dir>/eval.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Play one episode with a fixed α.
    Episode {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print one JSON line per generation instead of the summary.
        #[arg(long)]
        trace: bool,
    },
    /// Solve the corrective dispatch and print it as JSON.
    Dcopf {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Dispatch at α = 1, run the AC power flow and print it as JSON.
    Pf {
        #[arg(long)]
        case: PathBuf,
    },
}

fn read_case(path: &Path) -> Result<Network, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    Ok(parse_case(&text)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), HarnessError> {
    let s = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Output(e.into()))?;
    println!("{s}");
    Ok(())
}

fn action_for(alpha: f64) -> Result<usize, HarnessError> {
    ALPHAS
        .iter()
        .position(|&a| (a - alpha).abs() < 1e-9)
        .ok_or_else(|| HarnessError::Config(format!("α = {alpha} is not one of {ALPHAS:?}")))
}

#[derive(Serialize)]
struct EpisodeSummary<'a> {
    won: bool,
    total_reward: f64,
    stages_completed: usize,
    stages: &'a [StageOutcome],
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let report = harness::train(&cfg)?;
            print_json(&report.summary)
        }
        Command::Eval { config, checkpoint } => {
            let cfg = RunConfig::load(&config)?;
            let report = harness::evaluate(&cfg, checkpoint.as_deref())?;
            print_json(&report.summary)
        }
        Command::Episode { case, alpha, seed, trace } => {
            let action = action_for(alpha)?;
            let env = harness::load_environment(&case, EngineConfig::default())?;
            let result = run_episode(&env, |_| action, stream_rng(seed, Stream::Attack, 0))
                .map_err(|e| HarnessError::Numerical { episode: 0, msg: e.to_string() })?;
            if trace {
                let mut out = std::io::stdout().lock();
                for rec in result.trace() {
                    let line = serde_json::to_string(&rec).map_err(|e| HarnessError::Output(e.into()))?;
                    writeln!(out, "{line}")?;
                }
                Ok(())
            } else {
                print_json(&EpisodeSummary {
                    won: result.won,
                    total_reward: result.total_reward,
                    stages_completed: result.stages_completed(),
                    stages: &result.stages,
                })
            }
        }
        Command::Dcopf { case, alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(HarnessError::Config("α must be positive".into()));
            }
            let net = read_case(&case)?;
            let d = run_dcopf(&net, alpha).map_err(|e| HarnessError::Numerical { episode: 0, msg: e.to_string() })?;
            print_json(&d)
        }
        Command::Pf { case } => {
            let net = read_case(&case)?;
            let d = run_dcopf(&net, ALPHAS[IDENTITY_ACTION])
                .map_err(|e| HarnessError::Numerical { episode: 0, msg: e.to_string() })?;
            print_json(&ac_power_flow(&net, &d))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
