//! Command-line front end shared by the `cellfree` binary and the tests.
//!
//! Exit codes: 0 success, 2 bad configuration or input, 3 missing or
//! incompatible checkpoint, 1 any other runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::baselines::{AlwaysOn, DacSm1, DqnPolicy, DqnTrainer};
use crate::checkpoint::Checkpoint;
use crate::config::{load_scenario, ScenarioConfig};
use crate::error::{CheckpointError, ConfigError, MetricsError, TrainError};
use crate::eval::{evaluate, Policy};
use crate::mappo::{MappoAgent, MappoPolicy, MappoTrainer};
use crate::metrics::{self, EvalSummary, RunMeta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECKPOINT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cellfree", version, about = "Energy-aware cell-free massive MIMO simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a MAPPO or DQN controller.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Mappo)]
        algo: Algo,
        /// Training episodes (overrides rl.episodes).
        #[arg(long)]
        episodes: Option<usize>,
        /// Overrides rng_seed and CELLFREE_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Evaluate a policy on paired-seed full-length episodes.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// always-on, dac-sm1, mappo:<checkpoint> or dqn:<checkpoint>.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Earlier eval run directory to report percent savings against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Turn eval run directories into figure-ready CSVs.
    Figdata {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "figdata")]
        out: PathBuf,
    },
    /// Parse and validate a scenario file.
    ValidateConfig { config: PathBuf },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Mappo,
    Dqn,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Input(String),
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => Self::Config(c),
            TrainError::Checkpoint(c) => Self::Checkpoint(c),
            other => Self::Train(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Input(_) => EXIT_CONFIG,
            Self::Checkpoint(_) => EXIT_CHECKPOINT,
            Self::Train(_) | Self::Metrics(_) => EXIT_FAILURE,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            algo,
            episodes,
            seed,
            out,
        } => {
            let cfg = scenario(&config, seed)?;
            let dir = train(&cfg, algo, episodes.unwrap_or(cfg.rl.episodes), &out)?;
            println!("{}", dir.display());
        }
        Command::Eval {
            config,
            policy,
            episodes,
            seed,
            reference,
            out,
        } => {
            let cfg = scenario(&config, seed)?;
            let (dir, summary) = eval(&cfg, &policy, episodes, reference.as_deref(), &out)?;
            println!(
                "{}\n{}: P_net {:.3} W, drop ratio {:.3e}{}",
                dir.display(),
                summary.policy,
                summary.mean_p_net_w,
                summary.mean_drop_ratio,
                summary
                    .reference
                    .map(|r| format!(", {:.2}% below {}", r.pc_savings_pct, r.policy))
                    .unwrap_or_default()
            );
        }
        Command::Figdata { runs, out } => {
            let report = metrics::figdata(&runs, &out)?;
            for p in &report.written {
                println!("{}", p.display());
            }
            if !report.problems.is_empty() {
                for p in &report.problems {
                    eprintln!("missing: {p}");
                }
                return Err(CliError::Input(format!("{} lane(s) missing", report.problems.len())));
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = scenario(&config, None)?;
            println!("ok {} ({} APs, seed {})", metrics::config_hash(&cfg), cfg.geometry.num_aps, cfg.rng_seed);
        }
    }
    Ok(())
}

/// Load a scenario and apply the seed overrides: `--seed` beats
/// `CELLFREE_SEED`, which beats the file.
pub fn scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = load_scenario(path)?;
    cfg.apply_env_overrides()?;
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

/// Train and write checkpoint, curves and config echo to a new run dir.
pub fn train(cfg: &ScenarioConfig, algo: Algo, episodes: usize, out: &Path) -> Result<PathBuf, CliError> {
    let name = match algo {
        Algo::Mappo => "mappo",
        Algo::Dqn => "dqn",
    };
    // construct first so a bad scenario never leaves a run directory behind
    enum Trainer {
        Mappo(Box<MappoTrainer>),
        Dqn(Box<DqnTrainer>),
    }
    let mut trainer = match algo {
        Algo::Mappo => Trainer::Mappo(Box::new(MappoTrainer::new(cfg)?)),
        Algo::Dqn => Trainer::Dqn(Box::new(DqnTrainer::new(cfg)?)),
    };
    let dir = metrics::create_run_dir(out, "train", name)?;
    let meta = RunMeta {
        command: "train".into(),
        policy: name.into(),
        seed: cfg.rng_seed,
        config_hash: metrics::config_hash(cfg),
    };
    metrics::write_config_echo(&dir, cfg, &meta)?;
    let every = cfg.rl.checkpoint_every;
    let snapshot = |ck: Checkpoint, it: usize| {
        if every > 0 && it % every == 0 {
            if let Err(e) = ck.save(dir.join(format!("checkpoint-{it:05}.bin"))) {
                eprintln!("warning: intermediate checkpoint {it}: {e}");
            }
        }
    };
    match &mut trainer {
        Trainer::Mappo(t) => {
            let rows = t.train(episodes, |row, t| {
                eprintln!(
                    "episode {:4} reward {:12.2} entropy {:.3} P_net {:7.2} W drop {:.2e}",
                    row.iteration, row.episode_reward, row.entropy, row.mean_p_net_w, row.drop_ratio
                );
                snapshot(t.checkpoint(), row.iteration);
            })?;
            metrics::write_mappo_curves(&dir.join(metrics::CURVES_FILE), &rows)?;
            t.checkpoint().save(dir.join(metrics::CHECKPOINT_FILE))?;
        }
        Trainer::Dqn(t) => {
            let rows = t.train(episodes, |row, t| {
                eprintln!(
                    "episode {:4} reward {:12.2} epsilon {:.3} P_net {:7.2} W drop {:.2e}",
                    row.iteration, row.episode_reward, row.epsilon, row.mean_p_net_w, row.drop_ratio
                );
                snapshot(t.checkpoint(), row.iteration);
            })?;
            metrics::write_dqn_curves(&dir.join(metrics::CURVES_FILE), &rows)?;
            t.checkpoint().save(dir.join(metrics::CHECKPOINT_FILE))?;
        }
    }
    Ok(dir)
}

/// Resolve a policy spec such as `dac-sm1` or `mappo:runs/x/checkpoint.bin`.
pub fn policy_from_spec(cfg: &ScenarioConfig, spec: &str) -> Result<Box<dyn Policy>, CliError> {
    let load = |path: &str| -> Result<Checkpoint, CliError> {
        if !Path::new(path).is_file() {
            return Err(CheckpointError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{path}: no such checkpoint"),
            ))
            .into());
        }
        Ok(Checkpoint::load(path)?)
    };
    Ok(match spec.split_once(':') {
        None if spec == "always-on" => Box::new(AlwaysOn),
        None if spec == "dac-sm1" => Box::new(DacSm1::from_config(cfg)),
        Some(("mappo", path)) => Box::new(MappoPolicy {
            agent: MappoAgent::from_checkpoint(&load(path)?, cfg)?,
        }),
        Some(("dqn", path)) => Box::new(DqnPolicy::from_checkpoint(&load(path)?, cfg)?),
        _ => {
            return Err(CliError::Input(format!(
                "unknown policy `{spec}` (expected always-on, dac-sm1, mappo:<ckpt>, dqn:<ckpt>)"
            )))
        }
    })
}

/// Evaluate `spec` on `episodes` paired seeds and write a new run dir.
pub fn eval(
    cfg: &ScenarioConfig,
    spec: &str,
    episodes: usize,
    reference: Option<&Path>,
    out: &Path,
) -> Result<(PathBuf, EvalSummary), CliError> {
    let policy = policy_from_spec(cfg, spec)?;
    let reference = reference
        .map(|r| {
            metrics::read_json::<EvalSummary>(&r.join(metrics::SUMMARY_FILE))
                .map(|s| (r.display().to_string(), s))
                .map_err(|e| CliError::Input(format!("reference run: {e}")))
        })
        .transpose()?;
    let results = evaluate(cfg, policy.as_ref(), episodes, true);
    let eps: Vec<_> = results.iter().map(|r| r.summary.clone()).collect();
    let mut summary = EvalSummary::from_episodes(&policy.name(), cfg, &eps);
    if let Some((run, s)) = &reference {
        summary.compare_to(run, s);
    }
    let dir = metrics::create_run_dir(out, "eval", &policy.name())?;
    let meta = RunMeta {
        command: "eval".into(),
        policy: spec.to_string(),
        seed: cfg.rng_seed,
        config_hash: summary.config_hash.clone(),
    };
    metrics::write_config_echo(&dir, cfg, &meta)?;
    metrics::write_eval(&dir, &results, &summary)?;
    Ok((dir, summary))
}
