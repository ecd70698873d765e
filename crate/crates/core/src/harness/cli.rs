//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::armsim::Scenario;
use crate::error::{Error, Result};
use crate::harness::checkpoint;
use crate::harness::config::RunConfig;
use crate::harness::evaluate::evaluate;
use crate::harness::metrics;
use crate::harness::train::{seeded_stream, train, CONFIG_FILE};
use crate::harness::verify;
use crate::rewards::RewardMode;

/// Environment variable that overrides `train --out`.
pub const OUT_DIR_ENV: &str = "ARMRL_OUT_DIR";

/// Stream id for evaluation episodes, disjoint from the training streams.
const STREAM_EVAL: u64 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "armrl",
    version,
    about = "DDPG + HER pick-and-place training toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    S1,
    S2,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::S1 => Scenario::S1,
            ScenarioArg::S2 => Scenario::S2,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    Sparse,
    Dense,
}

impl From<RewardArg> for RewardMode {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Sparse => RewardMode::Sparse,
            RewardArg::Dense => RewardMode::Dense,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy, writing metrics.csv, checkpoint.bin and replay.bin into the output directory.
    Train {
        /// TOML run configuration; defaults are used for omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overridden by ARMRL_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use the reduced desk-scale schedule and network width.
        #[arg(long)]
        desk_scale: bool,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        #[arg(long, value_enum)]
        reward: Option<RewardArg>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_enum)]
        reward: RewardArg,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Seed for the evaluation episodes; defaults to the run seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a metrics log into a per-epoch table for plotting.
    PlotData {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle suites.
    Verify,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    match command {
        Command::Train {
            config,
            seed,
            out,
            desk_scale,
            scenario,
            reward,
            resume,
            quiet,
        } => {
            let out_dir = match std::env::var_os(OUT_DIR_ENV) {
                Some(d) if !d.is_empty() => PathBuf::from(d),
                _ => out.ok_or_else(|| {
                    Error::Config(format!("--out is required unless {OUT_DIR_ENV} is set"))
                })?,
            };
            let saved = out_dir.join(CONFIG_FILE);
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None if resume && saved.exists() => RunConfig::load(&saved)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if desk_scale {
                cfg.desk_scale = true;
            }
            if let Some(s) = scenario {
                cfg.env = cfg.env.clone().with_scenario(s.into());
            }
            if let Some(r) = reward {
                cfg.reward.mode = r.into();
            }
            cfg.validate()?;
            let done = train(cfg, &out_dir, resume, |row| {
                if !quiet {
                    let mut h = stdout.lock();
                    let _ = writeln!(
                        h,
                        "epoch {:>4}  success {:.3}  collision {:.3}  critic {:.5}  actor {:.5}",
                        row.epoch,
                        row.test_success_rate,
                        row.test_collision_rate,
                        row.critic_loss,
                        row.actor_loss
                    );
                }
            })?;
            let mut h = stdout.lock();
            writeln!(h, "checkpoint: {}", done.checkpoint_path.display())?;
            writeln!(h, "metrics: {}", done.metrics_path.display())?;
        }
        Command::Eval {
            checkpoint: path,
            scenario,
            reward,
            episodes,
            seed,
        } => {
            let ckpt = checkpoint::load(&path)?;
            let mut rng = seeded_stream(seed.unwrap_or(ckpt.config.seed), STREAM_EVAL);
            let table = evaluate(&ckpt, scenario.into(), reward.into(), episodes, &mut rng)?;
            writeln!(stdout.lock(), "{table}")?;
        }
        Command::PlotData { log, out } => {
            let rows = metrics::read_log(&log)?;
            std::fs::write(&out, metrics::plot_table(&rows))?;
        }
        Command::Verify => {
            let reports = verify::run_all();
            let mut h = stdout.lock();
            for r in &reports {
                writeln!(h, "{r}")?;
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(Error::Contract(format!("{failed} oracle suite(s) failed")));
            }
        }
    }
    Ok(())
}
