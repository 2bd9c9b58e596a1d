//! Experiment harness: parameter sweeps, Monte Carlo averaging over
//! resampled scenarios, convergence reports, and plot-ready CSV emission.
//!
//! Every cell of an experiment (sweep value x run) is an independent pure
//! computation; cells execute in a rayon worker pool and results are reduced
//! in a fixed order, so output bytes do not depend on thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{
    LearnParams, SelectionSource, TableChoice, TrainingTrace, extract_greedy_trajectory,
    extract_greedy_trajectory_single, random_policy, train_double_q_in, train_q_learning_in,
};
use crate::mdp::{EnvConfig, UavEnv};
use crate::scenario::{ChannelParams, Scenario, ScenarioDistribution, generate_scenario, load_scenario};
use crate::schedule::{
    DEFAULT_ORACLE_CAP, ServiceOrder, brute_force_optimum_capped, evaluate_order, objective,
};

/// Policies the harness can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    DoubleQ,
    QLearning,
    Random,
    Oracle,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::DoubleQ => "double-q",
            Algorithm::QLearning => "q-learning",
            Algorithm::Random => "random",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double-q" => Ok(Algorithm::DoubleQ),
            "q-learning" => Ok(Algorithm::QLearning),
            "random" => Ok(Algorithm::Random),
            "oracle" => Ok(Algorithm::Oracle),
            _ => Err(Error::UnknownName {
                what: "algorithm",
                value: s.to_string(),
                expected: "double-q | q-learning | random | oracle",
            }),
        }
    }
}

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "endurance")]
    Endurance,
    #[serde(rename = "users")]
    NumUsers,
    #[serde(rename = "aerial")]
    NumAerial,
    #[serde(rename = "speed")]
    UavSpeed,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Endurance => "endurance",
            SweepVar::NumUsers => "users",
            SweepVar::NumAerial => "aerial",
            SweepVar::UavSpeed => "speed",
        }
    }
}

impl std::fmt::Display for SweepVar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "endurance" => Ok(SweepVar::Endurance),
            "users" => Ok(SweepVar::NumUsers),
            "aerial" => Ok(SweepVar::NumAerial),
            "speed" => Ok(SweepVar::UavSpeed),
            _ => Err(Error::UnknownName {
                what: "sweep variable",
                value: s.to_string(),
                expected: "endurance | users | aerial | speed",
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

/// Where scenarios come from: a fixed file, or a distribution resampled with
/// seed `base_seed + run`. Omitting both falls back to the built-in
/// experiment distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScenarioSource {
    pub file: Option<PathBuf>,
    pub distribution: Option<ScenarioDistribution>,
    pub base_seed: u64,
}

impl ScenarioSource {
    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        ScenarioSource {
            file: Some(path.into()),
            distribution: None,
            base_seed: 0,
        }
    }

    pub fn from_distribution(dist: ScenarioDistribution, base_seed: u64) -> Self {
        ScenarioSource {
            file: None,
            distribution: Some(dist),
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.file.is_some() && self.distribution.is_some() {
            return Err(Error::invalid(
                "scenario",
                "set either `file` or `distribution`, not both",
            ));
        }
        if let Some(d) = &self.distribution {
            d.validate()?;
        }
        Ok(())
    }

    fn distribution_or_default(&self) -> ScenarioDistribution {
        self.distribution.clone().unwrap_or_else(default_distribution)
    }
}

/// Distribution the sweep experiments default to. Two knobs differ from
/// [`ScenarioDistribution::default`]: aerial links get a realistic mmWave
/// bandwidth (100 MHz) so they outrate the 1 MHz ground links, and request
/// volumes are sized so that a full 20-user tour fits the largest endurance
/// in the sweeps, which keeps every policy comparable across the whole
/// endurance axis.
pub fn default_distribution() -> ScenarioDistribution {
    ScenarioDistribution {
        data_size_range: [1e7, 4e7],
        channel: ChannelParams {
            aerial_bandwidth: Some(1e8),
            ..ChannelParams::default()
        },
        ..ScenarioDistribution::default()
    }
}

/// Full experiment description; serializable as the `--config` TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub algorithms: Vec<Algorithm>,
    pub sweep: Option<Sweep>,
    /// Independent runs per sweep value; each run resamples the scenario.
    pub runs: usize,
    pub learn: LearnParams,
    pub oracle_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: ScenarioSource::from_distribution(default_distribution(), 1),
            algorithms: vec![Algorithm::DoubleQ, Algorithm::QLearning, Algorithm::Random],
            sweep: None,
            runs: 100,
            learn: default_learn_params(),
            oracle_cap: DEFAULT_ORACLE_CAP,
        }
    }
}

/// Training configuration the sweep experiments default to. Compared to
/// [`LearnParams::default`]: epsilon decays to 0.05 so late episodes
/// concentrate visits on the incumbent trajectory (at 20 users the table is
/// far too large for uniform exploration to converge), the episode budget is
/// sized for that concentration to pay off, selection reads the sum of both
/// tables, and the updated table is drawn by coin flip. The coin matters:
/// strict per-step alternation on fixed-length episodes pins each (state,
/// action) depth to one table, so the two tables would never share a pair.
pub fn default_learn_params() -> LearnParams {
    LearnParams {
        epsilon_final: Some(0.05),
        episodes: 10_000,
        selection_source: SelectionSource::SumOfTables,
        table_choice: TableChoice::Random,
        ..LearnParams::default()
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            what: "experiment config",
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.runs == 0 {
            return Err(Error::invalid("runs", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("algorithms", "must name at least one algorithm"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::invalid("sweep.values", "must be nonempty"));
            }
            if self.scenario.file.is_some() {
                return Err(Error::invalid(
                    "sweep",
                    "sweeps resample scenarios and need a distribution source, not a fixed file",
                ));
            }
        }
        self.learn.validate()?;
        Ok(())
    }
}

/// `dist` with the sweep variable set to `value`. A `users` sweep keeps the
/// ground/aerial split as even as possible (ground takes the odd user); an
/// `aerial` sweep keeps the total fixed.
fn apply_sweep(dist: &ScenarioDistribution, var: SweepVar, value: f64) -> Result<ScenarioDistribution> {
    let mut d = dist.clone();
    match var {
        SweepVar::Endurance => d.endurance = value,
        SweepVar::UavSpeed => d.uav.speed = value,
        SweepVar::NumUsers => {
            let total = as_count("sweep.values", value)?;
            if total == 0 {
                return Err(Error::invalid("sweep.values", "user counts must be at least 1"));
            }
            d.num_ground = total.div_ceil(2);
            d.num_aerial = total / 2;
        }
        SweepVar::NumAerial => {
            let total = dist.num_users();
            let aerial = as_count("sweep.values", value)?;
            if aerial > total {
                return Err(Error::invalid(
                    "sweep.values",
                    format!("aerial count {aerial} exceeds the {total} total users"),
                ));
            }
            d.num_aerial = aerial;
            d.num_ground = total - aerial;
        }
    }
    d.validate()?;
    Ok(d)
}

fn as_count(field: &'static str, value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
        return Err(Error::invalid(
            field,
            format!("expected a nonnegative integer count, got {value}"),
        ));
    }
    Ok(value as usize)
}

/// One scored cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub run: usize,
    pub scenario_seed: u64,
    pub learner_seed: u64,
    pub satisfied: u32,
}

/// Aggregated over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub algorithm: Algorithm,
    pub mean_satisfied: f64,
    pub std_satisfied: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub raw: Vec<RawRow>,
    pub summary: Vec<ResultRow>,
}

/// Runs every (sweep value x run x algorithm) cell and aggregates
/// mean/standard deviation of the satisfied-user count. Deterministic for a
/// given config, independent of worker-pool size.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;

    enum PointSource {
        Fixed(Box<Scenario>),
        Sampled(ScenarioDistribution),
    }

    // One entry per sweep value ("none" when no sweep is configured).
    let mut points: Vec<(String, f64, PointSource)> = Vec::new();
    match &cfg.scenario.file {
        Some(path) => {
            let s = load_scenario(path)?;
            points.push(("none".to_string(), 0.0, PointSource::Fixed(Box::new(s))));
        }
        None => {
            let dist = cfg.scenario.distribution_or_default();
            match &cfg.sweep {
                None => points.push(("none".to_string(), 0.0, PointSource::Sampled(dist))),
                Some(sweep) => {
                    for &v in &sweep.values {
                        points.push((
                            sweep.var.name().to_string(),
                            v,
                            PointSource::Sampled(apply_sweep(&dist, sweep.var, v)?),
                        ));
                    }
                }
            }
        }
    }

    // Refuse combinatorial explosions before any work is queued.
    if cfg.algorithms.contains(&Algorithm::Oracle) {
        for (_, _, source) in &points {
            let users = match source {
                PointSource::Fixed(s) => s.num_users(),
                PointSource::Sampled(d) => d.num_users(),
            };
            if users > cfg.oracle_cap {
                return Err(Error::OracleCapExceeded {
                    users,
                    cap: cfg.oracle_cap,
                });
            }
        }
    }

    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.runs).map(move |r| (p, r)))
        .collect();

    let rows_per_cell: Vec<Vec<RawRow>> = cells
        .into_par_iter()
        .map(|(point_idx, run)| -> Result<Vec<RawRow>> {
            let (var, value, source) = &points[point_idx];
            let (scenario, scenario_seed) = match source {
                PointSource::Fixed(s) => ((**s).clone(), s.seed),
                PointSource::Sampled(dist) => {
                    let seed = cfg.scenario.base_seed.wrapping_add(run as u64);
                    (generate_scenario(dist, seed)?, seed)
                }
            };
            let learner_seed = cfg.learn.seed.wrapping_add(run as u64);
            let mut rows = Vec::with_capacity(cfg.algorithms.len());
            for &algorithm in &cfg.algorithms {
                let satisfied =
                    score_algorithm(algorithm, &scenario, &cfg.learn, learner_seed, cfg.oracle_cap)?;
                rows.push(RawRow {
                    sweep_var: var.clone(),
                    sweep_value: *value,
                    algorithm,
                    run,
                    scenario_seed,
                    learner_seed,
                    satisfied,
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut raw: Vec<RawRow> = rows_per_cell.into_iter().flatten().collect();
    raw.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.algorithm.name().cmp(b.algorithm.name()))
            .then_with(|| a.run.cmp(&b.run))
    });

    let mut summary = Vec::new();
    for (var, value, _) in &points {
        for &algorithm in &cfg.algorithms {
            let counts: Vec<u32> = raw
                .iter()
                .filter(|r| r.sweep_value == *value && r.sweep_var == *var && r.algorithm == algorithm)
                .map(|r| r.satisfied)
                .collect();
            let (mean, std) = mean_std(&counts);
            summary.push(ResultRow {
                sweep_var: var.clone(),
                sweep_value: *value,
                algorithm,
                mean_satisfied: mean,
                std_satisfied: std,
                runs: counts.len(),
            });
        }
    }
    summary.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.algorithm.name().cmp(b.algorithm.name()))
    });

    Ok(ExperimentResult { raw, summary })
}

/// Satisfied-user count of one algorithm's final trajectory on `scenario`.
fn score_algorithm(
    algorithm: Algorithm,
    scenario: &Scenario,
    learn: &LearnParams,
    learner_seed: u64,
    oracle_cap: usize,
) -> Result<u32> {
    let order = final_trajectory(algorithm, scenario, learn, learner_seed, oracle_cap)?;
    Ok(objective(&evaluate_order(scenario, &order)?))
}

/// The trajectory an algorithm settles on: greedy extraction for the
/// learners, a seeded shuffle for random, the exhaustive optimum for oracle.
pub fn final_trajectory(
    algorithm: Algorithm,
    scenario: &Scenario,
    learn: &LearnParams,
    learner_seed: u64,
    oracle_cap: usize,
) -> Result<ServiceOrder> {
    let params = LearnParams {
        seed: learner_seed,
        ..learn.clone()
    };
    match algorithm {
        Algorithm::DoubleQ => {
            let env = UavEnv::new(
                scenario,
                EnvConfig {
                    reward_mode: params.reward_mode,
                    early_stop: false,
                },
            )?;
            let (q_a, q_b, _) = train_double_q_in(&env, &params)?;
            Ok(extract_greedy_trajectory(&env, &q_a, &q_b))
        }
        Algorithm::QLearning => {
            let env = UavEnv::new(
                scenario,
                EnvConfig {
                    reward_mode: params.reward_mode,
                    early_stop: false,
                },
            )?;
            let (q, _) = train_q_learning_in(&env, &params)?;
            Ok(extract_greedy_trajectory_single(&env, &q))
        }
        Algorithm::Random => Ok(random_policy(scenario, learner_seed)),
        Algorithm::Oracle => Ok(brute_force_optimum_capped(scenario, oracle_cap)?.0),
    }
}

fn mean_std(counts: &[u32]) -> (f64, f64) {
    if counts.is_empty() {
        return (0.0, 0.0);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if counts.len() < 2 {
        return (mean, 0.0);
    }
    // Sample standard deviation (n - 1).
    let var = counts
        .iter()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var.sqrt())
}

pub fn raw_csv(result: &ExperimentResult) -> String {
    let mut out =
        String::from("sweep_var,sweep_value,algorithm,run,scenario_seed,learner_seed,satisfied\n");
    for r in &result.raw {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sweep_var, r.sweep_value, r.algorithm, r.run, r.scenario_seed, r.learner_seed, r.satisfied
        ));
    }
    out
}

pub fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("sweep_var,sweep_value,algorithm,mean_satisfied,std_satisfied,runs\n");
    for r in &result.summary {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sweep_var, r.sweep_value, r.algorithm, r.mean_satisfied, r.std_satisfied, r.runs
        ));
    }
    out
}

/// Trains double Q-learning once and returns the per-episode trace.
pub fn convergence_report(scenario: &Scenario, params: &LearnParams) -> Result<TrainingTrace> {
    let (_, _, trace) = crate::learning::train_double_q(scenario, params)?;
    Ok(trace)
}

/// Per-episode trace rows; optional statistics serialize as empty cells.
pub fn trace_csv(trace: &TrainingTrace) -> String {
    let mut out = String::from(
        "episode,env_steps,return,satisfied,visited_max_gap,visited_mean_abs_q,mean_q_a,mean_q_b\n",
    );
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.episode,
            r.env_steps,
            r.ret,
            r.satisfied,
            r.visited_max_gap.map(|v| v.to_string()).unwrap_or_default(),
            r.visited_mean_abs_q.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_q_a,
            r.mean_q_b.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    out
}

/// First episode whose trailing-`window` mean return is within `tolerance`
/// (relative) of the final trailing mean. `None` when the trace never
/// stabilizes or is shorter than the window.
pub fn episodes_to_convergence(
    trace: &TrainingTrace,
    window: usize,
    tolerance: f64,
) -> Option<usize> {
    if trace.len() < window || window == 0 {
        return None;
    }
    let last = trace.len() - 1;
    let final_mean = trace.trailing_mean_return(last, window);
    let threshold = if final_mean == 0.0 {
        tolerance
    } else {
        tolerance * final_mean.abs()
    };
    (window - 1..trace.len())
        .find(|&e| (trace.trailing_mean_return(e, window) - final_mean).abs() <= threshold)
}

/// Waypoint rows for plotting a trajectory: the UAV start, one hover point
/// per served user in visiting order, then the unserved users.
pub fn trajectory_csv(scenario: &Scenario, order: &ServiceOrder) -> Result<String> {
    let eval = evaluate_order(scenario, order)?;
    let mut out = String::from("row,order_position,user_id,kind,x,y,h,served,satisfied\n");
    out.push_str(&format!(
        "start,,,,{},{},{},,\n",
        scenario.uav.start_x, scenario.uav.start_y, scenario.uav.altitude
    ));
    for rec in &eval.records {
        let u = &scenario.users[rec.user];
        out.push_str(&format!(
            "waypoint,{},{},{},{},{},{},true,{}\n",
            rec.position, u.id, u.kind, u.x, u.y, scenario.uav.altitude, rec.satisfied
        ));
    }
    for u in &scenario.users {
        if eval.served_set & (1 << u.id) == 0 {
            out.push_str(&format!(
                "unserved,,{},{},{},{},{},false,false\n",
                u.id, u.kind, u.x, u.y, u.h
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::TableChoice;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioSource::from_distribution(
                ScenarioDistribution {
                    num_ground: 2,
                    num_aerial: 2,
                    ..default_distribution()
                },
                7,
            ),
            algorithms: vec![
                Algorithm::DoubleQ,
                Algorithm::QLearning,
                Algorithm::Random,
                Algorithm::Oracle,
            ],
            sweep: Some(Sweep {
                var: SweepVar::Endurance,
                values: vec![20.0, 60.0],
            }),
            runs: 3,
            learn: LearnParams {
                episodes: 60,
                ..LearnParams::default()
            },
            oracle_cap: DEFAULT_ORACLE_CAP,
        }
    }

    #[test]
    fn sweep_application() {
        let dist = default_distribution();
        let d = apply_sweep(&dist, SweepVar::Endurance, 30.0).unwrap();
        assert_eq!(d.endurance, 30.0);
        let d = apply_sweep(&dist, SweepVar::UavSpeed, 10.0).unwrap();
        assert_eq!(d.uav.speed, 10.0);
        let d = apply_sweep(&dist, SweepVar::NumUsers, 5.0).unwrap();
        assert_eq!((d.num_ground, d.num_aerial), (3, 2));
        let d = apply_sweep(&dist, SweepVar::NumAerial, 20.0).unwrap();
        assert_eq!((d.num_ground, d.num_aerial), (0, 20));
        assert!(apply_sweep(&dist, SweepVar::NumUsers, 2.5).is_err());
        assert!(apply_sweep(&dist, SweepVar::NumAerial, 21.0).is_err());
    }

    #[test]
    fn experiment_rows_and_determinism() {
        let cfg = tiny_config();
        let result = run_experiment(&cfg).unwrap();
        // 2 sweep values x 3 runs x 4 algorithms.
        assert_eq!(result.raw.len(), 24);
        assert_eq!(result.summary.len(), 8);
        for row in &result.summary {
            assert_eq!(row.runs, 3);
            assert!(row.mean_satisfied >= 0.0 && row.mean_satisfied <= 4.0);
        }
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(raw_csv(&result), raw_csv(&again));
        assert_eq!(summary_csv(&result), summary_csv(&again));
        assert!(summary_csv(&result).starts_with(
            "sweep_var,sweep_value,algorithm,mean_satisfied,std_satisfied,runs\n"
        ));
    }

    #[test]
    fn oracle_dominates_in_experiments() {
        let result = run_experiment(&tiny_config()).unwrap();
        for value in [20.0, 60.0] {
            for run in 0..3 {
                let of = |alg: Algorithm| {
                    result
                        .raw
                        .iter()
                        .find(|r| r.sweep_value == value && r.run == run && r.algorithm == alg)
                        .unwrap()
                        .satisfied
                };
                let oracle = of(Algorithm::Oracle);
                assert!(of(Algorithm::DoubleQ) <= oracle);
                assert!(of(Algorithm::QLearning) <= oracle);
                assert!(of(Algorithm::Random) <= oracle);
            }
        }
    }

    #[test]
    fn oracle_cap_refused_before_running() {
        let mut cfg = tiny_config();
        cfg.scenario = ScenarioSource::from_distribution(default_distribution(), 1); // 20 users
        let err = run_experiment(&cfg).unwrap_err();
        assert!(matches!(err, Error::OracleCapExceeded { users: 20, cap: 9 }));
    }

    #[test]
    fn sweep_requires_distribution_source() {
        let mut cfg = tiny_config();
        cfg.scenario = ScenarioSource::from_file("whatever.toml");
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("sweep"));
    }

    #[test]
    fn config_roundtrip_and_partial_parse() {
        let cfg = tiny_config();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);

        let partial: ExperimentConfig = toml::from_str(
            "runs = 5\n[learn]\nepisodes = 42\n[sweep]\nvar = \"speed\"\nvalues = [10.0, 50.0]\n",
        )
        .unwrap();
        assert_eq!(partial.runs, 5);
        assert_eq!(partial.learn.episodes, 42);
        assert_eq!(partial.learn.discount, 0.8);
        assert_eq!(partial.sweep.unwrap().var, SweepVar::UavSpeed);
        assert_eq!(partial.algorithms, ExperimentConfig::default().algorithms);
    }

    #[test]
    fn aggregation_matches_independent_recomputation() {
        let result = run_experiment(&tiny_config()).unwrap();
        for row in &result.summary {
            // Welford's algorithm as the independent route.
            let mut count = 0usize;
            let mut mean = 0.0f64;
            let mut m2 = 0.0f64;
            for r in &result.raw {
                if r.sweep_value == row.sweep_value && r.algorithm == row.algorithm {
                    count += 1;
                    let x = r.satisfied as f64;
                    let delta = x - mean;
                    mean += delta / count as f64;
                    m2 += delta * (x - mean);
                }
            }
            let std = if count > 1 {
                (m2 / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            assert_eq!(count, row.runs);
            assert!((mean - row.mean_satisfied).abs() <= 1e-9 * mean.abs().max(1.0));
            assert!((std - row.std_satisfied).abs() <= 1e-9 * std.abs().max(1.0));
        }
    }

    #[test]
    fn trace_csv_shape() {
        let dist = ScenarioDistribution {
            num_ground: 2,
            num_aerial: 0,
            ..default_distribution()
        };
        let s = generate_scenario(&dist, 3).unwrap();
        let params = LearnParams {
            episodes: 10,
            table_choice: TableChoice::Random,
            ..LearnParams::default()
        };
        let trace = convergence_report(&s, &params).unwrap();
        let csv = trace_csv(&trace);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("episode,env_steps,return,satisfied,"));
    }

    #[test]
    fn frozen_learning_rate_keeps_curves_at_zero() {
        let dist = ScenarioDistribution {
            num_ground: 3,
            num_aerial: 0,
            ..default_distribution()
        };
        let s = generate_scenario(&dist, 4).unwrap();
        let params = LearnParams {
            learning_rate: 0.0,
            episodes: 30,
            ..LearnParams::default()
        };
        let trace = convergence_report(&s, &params).unwrap();
        for r in &trace.records {
            assert_eq!(r.mean_q_a, 0.0);
            assert_eq!(r.mean_q_b, Some(0.0));
            assert_eq!(r.visited_max_gap, Some(0.0));
        }
    }

    #[test]
    fn convergence_detection_on_synthetic_trace() {
        use crate::learning::EpisodeRecord;
        let mut trace = TrainingTrace::default();
        for e in 0..300 {
            trace.records.push(EpisodeRecord {
                episode: e,
                env_steps: 0,
                ret: if e < 150 { e as f64 / 150.0 * 10.0 } else { 10.0 },
                satisfied: 0,
                visited_max_gap: None,
                visited_mean_abs_q: None,
                mean_q_a: 0.0,
                mean_q_b: None,
            });
        }
        let conv = episodes_to_convergence(&trace, 100, 0.02).unwrap();
        // The trailing-100 mean reaches 98% of 10 somewhere in the ramp tail.
        assert!(conv > 100 && conv < 250, "converged at {conv}");
        assert!(episodes_to_convergence(&trace, 1000, 0.02).is_none());
    }

    #[test]
    fn trajectory_rows() {
        let dist = ScenarioDistribution {
            num_ground: 2,
            num_aerial: 1,
            ..default_distribution()
        };
        let s = generate_scenario(&dist, 5).unwrap();
        let csv = trajectory_csv(&s, &ServiceOrder::new(vec![2, 0, 1]).unwrap()).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5); // header + start + 3 waypoints
        assert!(lines[1].starts_with("start,"));
        assert!(lines[2].starts_with("waypoint,0,2,aerial,"));
        assert!(lines[3].starts_with("waypoint,1,0,ground,"));
        assert!(lines[4].starts_with("waypoint,2,1,ground,"));

        let partial = trajectory_csv(&s, &ServiceOrder::new(vec![1]).unwrap()).unwrap();
        let lines: Vec<&str> = partial.lines().collect();
        assert_eq!(lines.len(), 5); // header + start + 1 waypoint + 2 unserved
        assert!(lines[3].starts_with("unserved,,0,ground,"));

        let empty = trajectory_csv(&s, &ServiceOrder::new(vec![]).unwrap()).unwrap();
        assert_eq!(empty.lines().count(), 5); // header + start + 3 unserved
    }
}
