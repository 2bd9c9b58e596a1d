//! `uav-sched`: scenario generation, training, evaluation, sweeps, and
//! plot-ready CSV export for the UAV service scheduler.
//!
//! Exit codes: 0 on success, 1 on validation/parse errors, 2 when a request
//! is infeasible (exhaustive search above its instance cap).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};

use uav_sched::experiment::{
    Algorithm, ExperimentConfig, Sweep, SweepVar, convergence_report, episodes_to_convergence,
    final_trajectory, raw_csv, run_experiment, summary_csv, trace_csv, trajectory_csv,
};
use uav_sched::learning::{
    extract_greedy_trajectory, extract_greedy_trajectory_single, load_snapshot, save_snapshot,
    train_double_q_in, train_q_learning_in,
};
use uav_sched::mdp::{EnvConfig, UavEnv};
use uav_sched::scenario::{Scenario, generate_scenario, load_scenario, save_scenario};
use uav_sched::schedule::{
    ServiceOrder, brute_force_optimum_capped, evaluate_order, evaluation_csv, objective,
};

#[derive(Parser)]
#[command(name = "uav-sched", version, about = "UAV service scheduling simulator and learners")]
struct Cli {
    /// Size of the worker pool (defaults to the number of cores). Output is
    /// identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config TOML (scenario source, learn parameters, sweep).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scenario file; overrides the config's scenario source.
    #[arg(long)]
    scenario: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a scenario and write it as scenario.toml.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scenario seed (defaults to the config's base seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a learner on one scenario; writes qtables.toml and trace.csv.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// double-q | q-learning
        #[arg(long, default_value = "double-q")]
        algorithm: String,
        #[arg(long)]
        episodes: Option<usize>,
        /// Learner seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a service order (given directly or extracted from a snapshot);
    /// writes evaluation.csv.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated user ids, e.g. 2,0,1.
        #[arg(long, conflicts_with = "qtables")]
        order: Option<String>,
        /// Q-table snapshot to extract the greedy order from.
        #[arg(long)]
        qtables: Option<PathBuf>,
    },
    /// Run a sweep experiment; writes raw.csv and summary.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// endurance | users | aerial | speed
        #[arg(long)]
        var: Option<String>,
        /// Comma-separated sweep values, e.g. 10,20,30.
        #[arg(long)]
        values: Option<String>,
        /// Independent runs per sweep value.
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated subset of double-q,q-learning,random,oracle.
        #[arg(long)]
        algorithms: Option<String>,
        /// Base scenario seed (run r uses seed + r).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train double Q-learning and export the per-episode trace as
    /// convergence.csv.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exhaustively search all service orders (small instances only); writes
    /// oracle.csv.
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest instance size the search accepts.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Export waypoints of an order (given directly, from a snapshot, or the
    /// trained default) as trajectory.csv.
    Trajectory {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, conflicts_with = "qtables")]
        order: Option<String>,
        #[arg(long)]
        qtables: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        let code = err
            .downcast_ref::<uav_sched::Error>()
            .map_or(1, |e| e.exit_code());
        std::process::exit(code);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common, seed } => {
            let cfg = load_config(&common)?;
            let seed = seed.unwrap_or(cfg.scenario.base_seed);
            let dist = cfg
                .scenario
                .distribution
                .clone()
                .unwrap_or_else(uav_sched::experiment::default_distribution);
            let s = generate_scenario(&dist, seed)?;
            let path = out_file(&common.out, "scenario.toml")?;
            save_scenario(&s, &path)?;
            println!(
                "wrote {} ({} users, seed {seed})",
                path.display(),
                s.num_users()
            );
            Ok(())
        }
        Command::Train {
            common,
            algorithm,
            episodes,
            seed,
        } => {
            let cfg = load_config(&common)?;
            let scenario = resolve_scenario(&common, &cfg)?;
            let mut params = cfg.learn.clone();
            if let Some(e) = episodes {
                params.episodes = e;
            }
            if let Some(s) = seed {
                params.seed = s;
            }
            let algorithm: Algorithm = algorithm.parse::<Algorithm>()?;
            let env = UavEnv::new(
                &scenario,
                EnvConfig {
                    reward_mode: params.reward_mode,
                    early_stop: false,
                },
            )?;
            let (order, snapshot_path) = match algorithm {
                Algorithm::DoubleQ => {
                    let (q_a, q_b, trace) = train_double_q_in(&env, &params)?;
                    let path = out_file(&common.out, "qtables.toml")?;
                    save_snapshot(&path, &scenario, &params, &q_a, Some(&q_b))?;
                    fs::write(out_file(&common.out, "trace.csv")?, trace_csv(&trace))?;
                    (extract_greedy_trajectory(&env, &q_a, &q_b), path)
                }
                Algorithm::QLearning => {
                    let (q, trace) = train_q_learning_in(&env, &params)?;
                    let path = out_file(&common.out, "qtables.toml")?;
                    save_snapshot(&path, &scenario, &params, &q, None)?;
                    fs::write(out_file(&common.out, "trace.csv")?, trace_csv(&trace))?;
                    (extract_greedy_trajectory_single(&env, &q), path)
                }
                other => bail!("train expects double-q or q-learning, got {other}"),
            };
            let satisfied = objective(&evaluate_order(&scenario, &order)?);
            println!("wrote {}", snapshot_path.display());
            println!("greedy order: {order}");
            println!("satisfied: {satisfied}/{}", scenario.num_users());
            Ok(())
        }
        Command::Evaluate {
            common,
            order,
            qtables,
        } => {
            let cfg = load_config(&common)?;
            let scenario = resolve_scenario(&common, &cfg)?;
            let order = resolve_order(&scenario, &cfg, order.as_deref(), qtables.as_deref())?;
            let eval = evaluate_order(&scenario, &order)?;
            let path = out_file(&common.out, "evaluation.csv")?;
            fs::write(&path, evaluation_csv(&scenario, &eval))?;
            println!("wrote {}", path.display());
            println!("order: {order}");
            println!("satisfied: {}/{}", objective(&eval), scenario.num_users());
            Ok(())
        }
        Command::Sweep {
            common,
            var,
            values,
            runs,
            algorithms,
            seed,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(path) = &common.scenario {
                cfg.scenario = uav_sched::experiment::ScenarioSource::from_file(path);
            }
            if let Some(var) = var {
                let values = values
                    .as_deref()
                    .context("--var requires --values")?
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().context("sweep values must be numbers"))
                    .collect::<Result<Vec<f64>>>()?;
                cfg.sweep = Some(Sweep {
                    var: var.parse::<SweepVar>()?,
                    values,
                });
            }
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(list) = algorithms {
                cfg.algorithms = list
                    .split(',')
                    .map(|a| a.trim().parse::<Algorithm>())
                    .collect::<uav_sched::Result<Vec<_>>>()?;
            }
            if let Some(s) = seed {
                cfg.scenario.base_seed = s;
            }
            let result = run_experiment(&cfg)?;
            fs::write(out_file(&common.out, "raw.csv")?, raw_csv(&result))?;
            let path = out_file(&common.out, "summary.csv")?;
            fs::write(&path, summary_csv(&result))?;
            println!("wrote {}", path.display());
            print!("{}", summary_csv(&result));
            Ok(())
        }
        Command::Convergence {
            common,
            episodes,
            seed,
        } => {
            let cfg = load_config(&common)?;
            let scenario = resolve_scenario(&common, &cfg)?;
            let mut params = cfg.learn.clone();
            if let Some(e) = episodes {
                params.episodes = e;
            }
            if let Some(s) = seed {
                params.seed = s;
            }
            let trace = convergence_report(&scenario, &params)?;
            let path = out_file(&common.out, "convergence.csv")?;
            fs::write(&path, trace_csv(&trace))?;
            println!("wrote {}", path.display());
            match episodes_to_convergence(&trace, 100, 0.02) {
                Some(e) => println!("trailing-100 return stabilized at episode {e}"),
                None => println!("trailing-100 return did not stabilize"),
            }
            Ok(())
        }
        Command::Oracle { common, cap } => {
            let cfg = load_config(&common)?;
            let scenario = resolve_scenario(&common, &cfg)?;
            let cap = cap.unwrap_or(cfg.oracle_cap);
            let (order, satisfied) = brute_force_optimum_capped(&scenario, cap)?;
            let eval = evaluate_order(&scenario, &order)?;
            let path = out_file(&common.out, "oracle.csv")?;
            fs::write(&path, evaluation_csv(&scenario, &eval))?;
            println!("wrote {}", path.display());
            println!("optimal order: {order}");
            println!("satisfied: {satisfied}/{}", scenario.num_users());
            Ok(())
        }
        Command::Trajectory {
            common,
            order,
            qtables,
        } => {
            let cfg = load_config(&common)?;
            let scenario = resolve_scenario(&common, &cfg)?;
            let order = resolve_order(&scenario, &cfg, order.as_deref(), qtables.as_deref())?;
            let path = out_file(&common.out, "trajectory.csv")?;
            fs::write(&path, trajectory_csv(&scenario, &order)?)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => Ok(ExperimentConfig::load(path)?),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Scenario precedence: --scenario flag, config `scenario.file`, then a fresh
/// sample from the configured distribution.
fn resolve_scenario(common: &CommonArgs, cfg: &ExperimentConfig) -> Result<Scenario> {
    if let Some(path) = &common.scenario {
        return Ok(load_scenario(path)?);
    }
    if let Some(path) = &cfg.scenario.file {
        return Ok(load_scenario(path)?);
    }
    let dist = cfg
        .scenario
        .distribution
        .clone()
        .unwrap_or_else(uav_sched::experiment::default_distribution);
    Ok(generate_scenario(&dist, cfg.scenario.base_seed)?)
}

/// Order precedence: explicit --order, greedy extraction from --qtables
/// (hash-checked against the scenario), else train the configured default
/// learner on the spot.
fn resolve_order(
    scenario: &Scenario,
    cfg: &ExperimentConfig,
    order: Option<&str>,
    qtables: Option<&Path>,
) -> Result<ServiceOrder> {
    if let Some(text) = order {
        return Ok(text.parse::<ServiceOrder>()?);
    }
    if let Some(path) = qtables {
        let snap = load_snapshot(path)?;
        let hash = scenario.sha256()?;
        if snap.scenario_sha256 != hash {
            return Err(uav_sched::Error::SnapshotScenarioMismatch {
                snapshot_hash: snap.scenario_sha256,
                scenario_hash: hash,
            }
            .into());
        }
        let env = UavEnv::new(scenario, EnvConfig::default())?;
        return Ok(match &snap.q_b {
            Some(q_b) => extract_greedy_trajectory(&env, &snap.q_a, q_b),
            None => extract_greedy_trajectory_single(&env, &snap.q_a),
        });
    }
    Ok(final_trajectory(
        Algorithm::DoubleQ,
        scenario,
        &cfg.learn,
        cfg.learn.seed,
        cfg.oracle_cap,
    )?)
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}
