//! Tabular agents: double Q-learning, the classic single-table baseline, and
//! a random policy, plus q-table snapshots.
//!
//! Double Q-learning keeps two tables and decouples action selection from
//! evaluation: the table being updated bootstraps through the *other* table's
//! value at its own argmax, which suppresses the maximization bias of the
//! single-table update.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, EnvConfig, RewardMode, StateKey, UavEnv};
use crate::scenario::Scenario;
use crate::schedule::ServiceOrder;

/// One value table. Unseen (state, action) pairs read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_actions: usize,
    rows: HashMap<StateKey, Vec<f64>>,
    value_sum: f64,
}

impl QTable {
    pub fn new(num_actions: usize) -> Self {
        QTable {
            num_actions,
            rows: HashMap::new(),
            value_sum: 0.0,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: StateKey, action: Action) -> f64 {
        self.rows.get(&state).map_or(0.0, |row| row[action.0])
    }

    pub fn set(&mut self, state: StateKey, action: Action, value: f64) {
        debug_assert!(value.is_finite(), "q-values must stay finite");
        let row = self
            .rows
            .entry(state)
            .or_insert_with(|| vec![0.0; self.num_actions]);
        self.value_sum += value - row[action.0];
        row[action.0] = value;
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cells(&self) -> usize {
        self.rows.len() * self.num_actions
    }

    /// Mean over all stored cells (0 when the table is empty).
    pub fn mean_value(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.value_sum / self.num_cells() as f64
        }
    }

    pub fn states(&self) -> impl Iterator<Item = (&StateKey, &[f64])> {
        self.rows.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Argmax over `legal` of this table, ties to the earliest entry (callers
    /// pass actions in ascending id order).
    pub fn greedy_action(&self, state: StateKey, legal: &[Action]) -> Option<Action> {
        argmax_by(legal, |a| self.get(state, a))
    }
}

fn argmax_by(legal: &[Action], value: impl Fn(Action) -> f64) -> Option<Action> {
    let mut best: Option<(Action, f64)> = None;
    for &a in legal {
        let v = value(a);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((a, v)),
        }
    }
    best.map(|(a, _)| a)
}

/// Which table an update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableSide {
    A,
    B,
}

/// Where the greedy half of action selection reads its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSource {
    /// Read the table that is *not* scheduled for update this step.
    #[default]
    OtherTable,
    /// Read the sum of both tables (the textbook double-Q convention).
    SumOfTables,
}

/// How the table to update is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TableChoice {
    /// Strict A/B alternation across steps.
    #[default]
    Alternate,
    /// Fair coin per step.
    Random,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnParams {
    /// Step size in [0, 1].
    pub learning_rate: f64,
    /// Discount factor in [0, 1).
    pub discount: f64,
    /// Exploration probability in [0, 1].
    pub epsilon: f64,
    /// When set, epsilon decays linearly to this value over the run.
    pub epsilon_final: Option<f64>,
    pub episodes: usize,
    pub reward_mode: RewardMode,
    pub selection_source: SelectionSource,
    pub table_choice: TableChoice,
    pub seed: u64,
}

impl Default for LearnParams {
    fn default() -> Self {
        LearnParams {
            learning_rate: 0.5,
            discount: 0.8,
            epsilon: 0.5,
            epsilon_final: None,
            episodes: 1000,
            reward_mode: RewardMode::default(),
            selection_source: SelectionSource::default(),
            table_choice: TableChoice::default(),
            seed: 1,
        }
    }
}

impl LearnParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::invalid(
                "learn.learning_rate",
                format!("must be in [0, 1], got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid(
                "learn.discount",
                format!("must be in [0, 1), got {}", self.discount),
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(
                "learn.epsilon",
                format!("must be in [0, 1], got {}", self.epsilon),
            ));
        }
        if let Some(e) = self.epsilon_final {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::invalid(
                    "learn.epsilon_final",
                    format!("must be in [0, 1], got {e}"),
                ));
            }
        }
        Ok(())
    }

    /// Exploration probability for a given episode (linear decay when
    /// `epsilon_final` is set, constant otherwise).
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        match self.epsilon_final {
            None => self.epsilon,
            Some(end) => {
                if self.episodes <= 1 {
                    return end;
                }
                let frac = episode as f64 / (self.episodes - 1) as f64;
                self.epsilon + (end - self.epsilon) * frac.min(1.0)
            }
        }
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            reward_mode: self.reward_mode,
            early_stop: false,
        }
    }
}

/// Epsilon-greedy selection probabilities: the greedy action draws
/// `1 - eps + eps/n`, every other legal action `eps/n`.
pub fn selection_probabilities(epsilon: f64, num_legal: usize, greedy_index: usize) -> Vec<f64> {
    let n = num_legal as f64;
    (0..num_legal)
        .map(|i| {
            if i == greedy_index {
                1.0 - epsilon + epsilon / n
            } else {
                epsilon / n
            }
        })
        .collect()
}

/// Epsilon-greedy over the configured selection source. `update_side` names
/// the table scheduled for update this step, so `OtherTable` reads its
/// counterpart.
pub fn select_action(
    state: StateKey,
    q_a: &QTable,
    q_b: &QTable,
    legal: &[Action],
    epsilon: f64,
    source: SelectionSource,
    update_side: TableSide,
    rng: &mut impl Rng,
) -> Result<Action> {
    if legal.is_empty() {
        return Err(Error::NoActions);
    }
    if rng.random::<f64>() < epsilon {
        return Ok(legal[rng.random_range(0..legal.len())]);
    }
    let greedy = match source {
        SelectionSource::OtherTable => match update_side {
            TableSide::A => q_b.greedy_action(state, legal),
            TableSide::B => q_a.greedy_action(state, legal),
        },
        SelectionSource::SumOfTables => {
            argmax_by(legal, |a| q_a.get(state, a) + q_b.get(state, a))
        }
    };
    Ok(greedy.expect("legal set is nonempty"))
}

/// One environment transition. `next_legal` is empty at terminal states,
/// which zeroes the bootstrap term.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: StateKey,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateKey,
    pub next_legal: Vec<Action>,
}

/// Applies the double update to exactly one table: the updated table picks
/// the successor argmax, the other table evaluates it.
pub fn double_q_update(
    q_a: &mut QTable,
    q_b: &mut QTable,
    t: &Transition,
    side: TableSide,
    params: &LearnParams,
) {
    let (updated, evaluator): (&mut QTable, &QTable) = match side {
        TableSide::A => (q_a, &*q_b),
        TableSide::B => (q_b, &*q_a),
    };
    let bootstrap = match updated.greedy_action(t.next_state, &t.next_legal) {
        Some(a_star) => evaluator.get(t.next_state, a_star),
        None => 0.0,
    };
    let old = updated.get(t.state, t.action);
    let new = (1.0 - params.learning_rate) * old
        + params.learning_rate * (t.reward + params.discount * bootstrap);
    updated.set(t.state, t.action, new);
}

/// Classic single-table update with a max bootstrap.
pub fn q_update(q: &mut QTable, t: &Transition, params: &LearnParams) {
    let bootstrap = match q.greedy_action(t.next_state, &t.next_legal) {
        Some(a_star) => q.get(t.next_state, a_star),
        None => 0.0,
    };
    let old = q.get(t.state, t.action);
    let new = (1.0 - params.learning_rate) * old
        + params.learning_rate * (t.reward + params.discount * bootstrap);
    q.set(t.state, t.action, new);
}

/// Per-episode training statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Cumulative environment steps at the end of this episode.
    pub env_steps: u64,
    /// Undiscounted return of the behavior policy.
    pub ret: f64,
    /// Satisfied users at episode end.
    pub satisfied: u32,
    /// Max |Q^A - Q^B| over the pairs updated this episode (double-Q only).
    pub visited_max_gap: Option<f64>,
    /// Mean |Q| over the pairs updated this episode.
    pub visited_mean_abs_q: Option<f64>,
    /// Mean over all stored cells of table A (the only table, for Q-learning).
    pub mean_q_a: f64,
    pub mean_q_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainingTrace {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean return over the trailing `window` episodes ending at `end`
    /// (inclusive).
    pub fn trailing_mean_return(&self, end: usize, window: usize) -> f64 {
        let start = (end + 1).saturating_sub(window);
        let slice = &self.records[start..=end];
        slice.iter().map(|r| r.ret).sum::<f64>() / slice.len() as f64
    }
}

/// Trains double Q-learning on a fresh environment for the scenario.
pub fn train_double_q(
    scenario: &Scenario,
    params: &LearnParams,
) -> Result<(QTable, QTable, TrainingTrace)> {
    let env = UavEnv::new(scenario, params.env_config())?;
    train_double_q_in(&env, params)
}

/// Trains double Q-learning on an existing environment. Fully deterministic
/// given (environment, params).
pub fn train_double_q_in(
    env: &UavEnv,
    params: &LearnParams,
) -> Result<(QTable, QTable, TrainingTrace)> {
    train_double_q_hooked(env, params, |_, _, _| {})
}

/// Per-pair update tally, `[table A, table B]`.
pub type UpdateCounts = HashMap<(StateKey, Action), [u32; 2]>;

/// As [`train_double_q_in`], additionally counting how often each pair was
/// updated in each table (convergence diagnostics want to reason about
/// well-visited pairs only).
pub fn train_double_q_counted(
    env: &UavEnv,
    params: &LearnParams,
) -> Result<(QTable, QTable, TrainingTrace, UpdateCounts)> {
    let mut counts: UpdateCounts = HashMap::new();
    let (q_a, q_b, trace) = train_double_q_hooked(env, params, |state, action, side| {
        let entry = counts.entry((state, action)).or_insert([0, 0]);
        match side {
            TableSide::A => entry[0] += 1,
            TableSide::B => entry[1] += 1,
        }
    })?;
    Ok((q_a, q_b, trace, counts))
}

fn train_double_q_hooked(
    env: &UavEnv,
    params: &LearnParams,
    mut on_update: impl FnMut(StateKey, Action, TableSide),
) -> Result<(QTable, QTable, TrainingTrace)> {
    params.validate()?;
    let n = env.num_users();
    let mut q_a = QTable::new(n);
    let mut q_b = QTable::new(n);
    let mut trace = TrainingTrace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut next_side = TableSide::A;
    let mut env_steps = 0u64;
    let mut touched: Vec<(StateKey, Action)> = Vec::with_capacity(n);

    for episode in 0..params.episodes {
        let epsilon = params.epsilon_at(episode);
        let mut state = env.reset();
        let mut ret = 0.0;
        touched.clear();
        loop {
            let key = state.key();
            let legal = env.available_actions(&state);
            let side = match params.table_choice {
                TableChoice::Alternate => {
                    let s = next_side;
                    next_side = match s {
                        TableSide::A => TableSide::B,
                        TableSide::B => TableSide::A,
                    };
                    s
                }
                TableChoice::Random => {
                    if rng.random::<bool>() {
                        TableSide::A
                    } else {
                        TableSide::B
                    }
                }
            };
            let action = select_action(
                key,
                &q_a,
                &q_b,
                &legal,
                epsilon,
                params.selection_source,
                side,
                &mut rng,
            )?;
            let (next, reward, terminal) = env.step(&state, action)?;
            let next_legal = if terminal {
                Vec::new()
            } else {
                env.available_actions(&next)
            };
            double_q_update(
                &mut q_a,
                &mut q_b,
                &Transition {
                    state: key,
                    action,
                    reward,
                    next_state: next.key(),
                    next_legal,
                },
                side,
                params,
            );
            on_update(key, action, side);
            touched.push((key, action));
            ret += reward;
            env_steps += 1;
            state = next;
            if terminal {
                break;
            }
        }
        let (max_gap, mean_abs) = touched_stats(&touched, &q_a, Some(&q_b));
        trace.records.push(EpisodeRecord {
            episode,
            env_steps,
            ret,
            satisfied: state.num_satisfied(),
            visited_max_gap: Some(max_gap),
            visited_mean_abs_q: Some(mean_abs),
            mean_q_a: q_a.mean_value(),
            mean_q_b: Some(q_b.mean_value()),
        });
    }
    Ok((q_a, q_b, trace))
}

/// Trains the classic single-table baseline.
pub fn train_q_learning(
    scenario: &Scenario,
    params: &LearnParams,
) -> Result<(QTable, TrainingTrace)> {
    let env = UavEnv::new(scenario, params.env_config())?;
    train_q_learning_in(&env, params)
}

pub fn train_q_learning_in(env: &UavEnv, params: &LearnParams) -> Result<(QTable, TrainingTrace)> {
    params.validate()?;
    let mut q = QTable::new(env.num_users());
    let mut trace = TrainingTrace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut env_steps = 0u64;
    let mut touched: Vec<(StateKey, Action)> = Vec::with_capacity(env.num_users());

    for episode in 0..params.episodes {
        let epsilon = params.epsilon_at(episode);
        let mut state = env.reset();
        let mut ret = 0.0;
        touched.clear();
        loop {
            let key = state.key();
            let legal = env.available_actions(&state);
            if legal.is_empty() {
                return Err(Error::NoActions);
            }
            let action = if rng.random::<f64>() < epsilon {
                legal[rng.random_range(0..legal.len())]
            } else {
                q.greedy_action(key, &legal).expect("legal set is nonempty")
            };
            let (next, reward, terminal) = env.step(&state, action)?;
            let next_legal = if terminal {
                Vec::new()
            } else {
                env.available_actions(&next)
            };
            q_update(
                &mut q,
                &Transition {
                    state: key,
                    action,
                    reward,
                    next_state: next.key(),
                    next_legal,
                },
                params,
            );
            touched.push((key, action));
            ret += reward;
            env_steps += 1;
            state = next;
            if terminal {
                break;
            }
        }
        let (_, mean_abs) = touched_stats(&touched, &q, None);
        trace.records.push(EpisodeRecord {
            episode,
            env_steps,
            ret,
            satisfied: state.num_satisfied(),
            visited_max_gap: None,
            visited_mean_abs_q: Some(mean_abs),
            mean_q_a: q.mean_value(),
            mean_q_b: None,
        });
    }
    Ok((q, trace))
}

/// (max |Q^A - Q^B|, mean |mid|) over the touched pairs; gap is 0 without a
/// second table.
fn touched_stats(touched: &[(StateKey, Action)], q_a: &QTable, q_b: Option<&QTable>) -> (f64, f64) {
    if touched.is_empty() {
        return (0.0, 0.0);
    }
    let mut max_gap = 0.0f64;
    let mut abs_sum = 0.0;
    for &(s, a) in touched {
        let va = q_a.get(s, a);
        match q_b {
            Some(qb) => {
                let vb = qb.get(s, a);
                max_gap = max_gap.max((va - vb).abs());
                abs_sum += ((va + vb) / 2.0).abs();
            }
            None => abs_sum += va.abs(),
        }
    }
    (max_gap, abs_sum / touched.len() as f64)
}

/// Co-convergence diagnostic over the well-visited core: max |Q^A - Q^B| and
/// mean |(Q^A + Q^B)/2| across pairs updated at least `min_updates` times in
/// each table. `None` when no pair qualifies.
pub fn co_convergence_gap(
    q_a: &QTable,
    q_b: &QTable,
    counts: &UpdateCounts,
    min_updates: u32,
) -> Option<(f64, f64)> {
    let mut max_gap = 0.0f64;
    let mut abs_sum = 0.0;
    let mut n = 0usize;
    for (&(state, action), &[ca, cb]) in counts {
        if ca >= min_updates && cb >= min_updates {
            let va = q_a.get(state, action);
            let vb = q_b.get(state, action);
            max_gap = max_gap.max((va - vb).abs());
            abs_sum += ((va + vb) / 2.0).abs();
            n += 1;
        }
    }
    (n > 0).then(|| (max_gap, abs_sum / n as f64))
}

/// Follows the argmax of (Q^A + Q^B)/2 from reset until terminal, ties to the
/// smallest user id. All-zero tables therefore yield 0, 1, ..., U-1.
pub fn extract_greedy_trajectory(env: &UavEnv, q_a: &QTable, q_b: &QTable) -> ServiceOrder {
    extract_trajectory_by(env, |state, legal| {
        argmax_by(legal, |a| (q_a.get(state, a) + q_b.get(state, a)) / 2.0)
            .expect("legal set is nonempty")
    })
}

/// Single-table greedy trajectory.
pub fn extract_greedy_trajectory_single(env: &UavEnv, q: &QTable) -> ServiceOrder {
    extract_trajectory_by(env, |state, legal| {
        q.greedy_action(state, legal).expect("legal set is nonempty")
    })
}

fn extract_trajectory_by(
    env: &UavEnv,
    mut pick: impl FnMut(StateKey, &[Action]) -> Action,
) -> ServiceOrder {
    let mut state = env.reset();
    let mut order = Vec::with_capacity(env.num_users());
    while !env.is_terminal(&state) {
        let legal = env.available_actions(&state);
        let action = pick(state.key(), &legal);
        let (next, _, _) = env.step(&state, action).expect("legal action");
        order.push(action.0);
        state = next;
    }
    ServiceOrder::new(order).expect("visits each user at most once")
}

/// Uniform random permutation of all users, deterministic per seed.
pub fn random_policy(scenario: &Scenario, seed: u64) -> ServiceOrder {
    let mut ids: Vec<usize> = (0..scenario.num_users()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ServiceOrder::new(ids).expect("permutation has no duplicates")
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

const SNAPSHOT_SCHEMA: &str = "uav-sched/qtables/1";

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    schema: String,
    /// SHA-256 of the scenario the tables were trained on.
    scenario_sha256: String,
    num_users: usize,
    params: LearnParams,
    /// Cells keyed `served:last:action` with `last` = user id or `start`.
    /// Zero-valued cells are omitted (they read back as the default 0).
    table_a: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table_b: Option<BTreeMap<String, f64>>,
}

/// A reloaded snapshot.
#[derive(Debug, Clone)]
pub struct QSnapshot {
    pub scenario_sha256: String,
    pub num_users: usize,
    pub params: LearnParams,
    pub q_a: QTable,
    pub q_b: Option<QTable>,
}

fn encode_key(state: StateKey, action: Action) -> String {
    match state.last_position {
        None => format!("{}:start:{}", state.served, action.0),
        Some(p) => format!("{}:{}:{}", state.served, p, action.0),
    }
}

fn decode_key(key: &str) -> Result<(StateKey, Action)> {
    let bad = || Error::UnknownName {
        what: "q-table cell key",
        value: key.to_string(),
        expected: "served:last:action, e.g. 5:2:0 or 0:start:3",
    };
    let parts: Vec<&str> = key.split(':').collect();
    let [served, last, action] = parts.as_slice() else {
        return Err(bad());
    };
    let served: u64 = served.parse().map_err(|_| bad())?;
    let last_position = if *last == "start" {
        None
    } else {
        Some(last.parse().map_err(|_| bad())?)
    };
    let action: usize = action.parse().map_err(|_| bad())?;
    Ok((
        StateKey {
            served,
            last_position,
        },
        Action(action),
    ))
}

fn table_to_cells(q: &QTable) -> BTreeMap<String, f64> {
    let mut cells = BTreeMap::new();
    for (state, row) in q.states() {
        for (a, &v) in row.iter().enumerate() {
            if v != 0.0 {
                cells.insert(encode_key(*state, Action(a)), v);
            }
        }
    }
    cells
}

fn cells_to_table(cells: &BTreeMap<String, f64>, num_actions: usize) -> Result<QTable> {
    let mut q = QTable::new(num_actions);
    for (key, &v) in cells {
        let (state, action) = decode_key(key)?;
        if action.0 >= num_actions {
            return Err(Error::UnknownName {
                what: "q-table cell key",
                value: key.clone(),
                expected: "action id below num_users",
            });
        }
        q.set(state, action, v);
    }
    Ok(q)
}

/// Writes both tables (or one, for the single-table baseline) with enough
/// header to reproduce greedy extraction bit-exactly on reload.
pub fn save_snapshot(
    path: impl AsRef<Path>,
    scenario: &Scenario,
    params: &LearnParams,
    q_a: &QTable,
    q_b: Option<&QTable>,
) -> Result<()> {
    let file = SnapshotFile {
        schema: SNAPSHOT_SCHEMA.to_string(),
        scenario_sha256: scenario.sha256()?,
        num_users: scenario.num_users(),
        params: params.clone(),
        table_a: table_to_cells(q_a),
        table_b: q_b.map(table_to_cells),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Serialize {
        what: "q-table snapshot",
        source: Box::new(e),
    })?;
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<QSnapshot> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: SnapshotFile = toml::from_str(&text).map_err(|e| Error::Parse {
        what: "q-table snapshot",
        path: path.to_path_buf(),
        source: Box::new(e),
    })?;
    if file.schema != SNAPSHOT_SCHEMA {
        return Err(Error::UnknownName {
            what: "snapshot schema",
            value: file.schema,
            expected: SNAPSHOT_SCHEMA,
        });
    }
    Ok(QSnapshot {
        q_a: cells_to_table(&file.table_a, file.num_users)?,
        q_b: file
            .table_b
            .as_ref()
            .map(|cells| cells_to_table(cells, file.num_users))
            .transpose()?,
        scenario_sha256: file.scenario_sha256,
        num_users: file.num_users,
        params: file.params,
    })
}
