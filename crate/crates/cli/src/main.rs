use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cachecast::experiment::{
    emit_outputs, parse_expectation, resolve_seed, run_sweep, simulate_trials, solve_ccm, Config,
    OutputFormat, SolutionFile, SweepSpec,
};
use cachecast::lc_u::lcu_expected_distortion;
use cachecast::optimizer::{OptimizerConfig, Scheme};
use cachecast::rng::SEED_ENV;
use cachecast::source_model::{ExpectationMode, DEFAULT_MC_SAMPLES, EXACT_CAP};
use cachecast::validate::{validate, Level};
use clap::{Parser, Subcommand};

/// Distortion-memory tradeoffs for cache-aided layered video over a shared
/// link.
#[derive(Parser)]
#[command(name = "cachecast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Instance config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed; overrides CACHECAST_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(Config, u64)> {
        let cfg = Config::load(&self.config)?;
        let env = std::env::var(SEED_ENV).ok();
        let seed = resolve_seed(self.seed, env.as_deref(), cfg.seed)?;
        Ok((cfg, seed))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Distortion curves over the [sweep] grid of the config.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
    },
    /// Expected distortion of local caching with unicast delivery.
    Lcu {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capacity: f64,
        /// Cache budget of every receiver; defaults to the config.
        #[arg(long)]
        cache: Option<f64>,
        /// `exact` or `mc:<samples>:<seed>`; exact when the demand space is
        /// small enough, Monte Carlo otherwise.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Optimizes a coded-multicast design and saves it for `simulate`.
    Ccm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capacity: f64,
        #[arg(long)]
        cache: Option<f64>,
        #[arg(long, default_value = "rlfu")]
        scheme: Scheme,
        #[arg(long)]
        restarts: Option<usize>,
        /// Where to write the solution.
        #[arg(long, default_value = "solution.json")]
        solution: PathBuf,
    },
    /// Packet-level replay of a design over random demands.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capacity: f64,
        #[arg(long)]
        cache: Option<f64>,
        /// Packets per layer.
        #[arg(long, default_value_t = 100)]
        packets: u32,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Saved design; without it one is optimized first (rlfu for
        /// symmetric instances, general otherwise).
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Runs the acceptance suite and prints a JSON report.
    Validate {
        #[arg(long, default_value = "quick")]
        level: Level,
    },
}

fn optimizer(cfg: &Config, seed: u64, restarts: Option<usize>) -> OptimizerConfig {
    OptimizerConfig {
        seed,
        restarts: restarts.unwrap_or(cfg.optimizer.restarts),
        ..cfg.optimizer.clone()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep {
            common,
            out,
            format,
        } => {
            let (cfg, seed) = common.load()?;
            let spec = SweepSpec::from_config(&cfg, seed)?;
            let table = run_sweep(&spec)?;
            for path in emit_outputs(&table, &out, format)? {
                log::info!("wrote {}", path.display());
            }
        }
        Command::Lcu {
            common,
            capacity,
            cache,
            mode,
        } => {
            let (cfg, seed) = common.load()?;
            let lib = cfg.instance.library()?;
            let model = cfg.instance.demand_model()?;
            let budgets = cfg.instance.budgets(cache)?;
            let mode = match mode {
                Some(m) => parse_expectation(&m)?,
                None if model.demand_space() <= EXACT_CAP => ExpectationMode::Exact,
                None => ExpectationMode::MonteCarlo {
                    samples: DEFAULT_MC_SAMPLES,
                    seed,
                },
            };
            let out = lcu_expected_distortion(&lib, &model, &budgets, capacity, mode)?;
            println!("R,M,expected_distortion,stderr");
            println!(
                "{capacity},{},{},{}",
                mean(&budgets),
                out.estimate.mean,
                out.estimate.stderr
            );
        }
        Command::Ccm {
            common,
            capacity,
            cache,
            scheme,
            restarts,
            solution,
        } => {
            let (cfg, seed) = common.load()?;
            let lib = cfg.instance.library()?;
            let model = cfg.instance.demand_model()?;
            let budgets = cfg.instance.budgets(cache)?;
            let opt = optimizer(&cfg, seed, restarts);
            let sol = solve_ccm(scheme, &lib, &model, &budgets, capacity, &opt)?;
            SolutionFile::new(&sol, capacity, &budgets, lib.m())?.save(&solution)?;
            println!("scheme,R,M,m_tilde,objective,feasible");
            println!(
                "{scheme},{capacity},{},{},{},{}",
                mean(&budgets),
                sol.m_tilde.map_or(String::new(), |c| c.to_string()),
                sol.objective,
                sol.feasible
            );
        }
        Command::Simulate {
            common,
            capacity,
            cache,
            packets,
            trials,
            solution,
        } => {
            let (cfg, seed) = common.load()?;
            let lib = cfg.instance.library()?;
            let model = cfg.instance.demand_model()?;
            let plan = match solution {
                Some(path) => {
                    let file = SolutionFile::load(&path)
                        .with_context(|| format!("loading {}", path.display()))?;
                    if file.capacity != capacity {
                        log::warn!(
                            "design was optimized for R={}, simulating R={capacity}",
                            file.capacity
                        );
                    }
                    file.plan
                }
                None => {
                    let budgets = cfg.instance.budgets(cache)?;
                    let scheme = if model.is_symmetric() && budgets.iter().all(|b| *b == budgets[0])
                    {
                        Scheme::Rlfu
                    } else {
                        Scheme::General
                    };
                    let opt = optimizer(&cfg, seed, None);
                    solve_ccm(scheme, &lib, &model, &budgets, capacity, &opt)?.plan
                }
            };
            if packets == 0 || trials == 0 {
                bail!("packets and trials must be positive");
            }
            let rows = simulate_trials(&lib, &model, &plan, capacity, packets, trials, seed)?;
            println!("trial,demand_hash,coded_rate,naive_rate,unicast_rate,mean_distortion");
            for r in rows {
                println!(
                    "{},{:016x},{},{},{},{}",
                    r.trial,
                    r.demand_hash,
                    r.coded_rate,
                    r.naive_rate,
                    r.unicast_rate,
                    r.mean_distortion
                );
            }
        }
        Command::Validate { level } => {
            let report = validate(level);
            println!("{}", serde_json::to_string_pretty(&report)?);
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
