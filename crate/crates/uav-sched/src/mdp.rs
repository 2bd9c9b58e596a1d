//! The finite decision process the learners run on: which user to serve next.
//!
//! Transitions are deterministic: serving a user advances the clock by the
//! flight leg plus its transmission time. The tabular state key is the served
//! bitmask plus the UAV's current hovering position; elapsed time is carried
//! in [`EnvState`] for reward bookkeeping but deliberately kept out of the
//! key so the table stays at most `(U + 1) * 2^U` states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::schedule::ServiceTimes;

/// Serve user `.0` next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub usize);

/// Tabular state address: what has been served, and where the UAV hovers
/// (`None` until the first service).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    pub served: u64,
    pub last_position: Option<usize>,
}

/// Full episode state. `elapsed` and `satisfied` are derived bookkeeping,
/// not part of the tabular key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub served: u64,
    pub last_position: Option<usize>,
    /// Completion time of the last served user (the running clock).
    pub elapsed: f64,
    pub satisfied: u64,
}

impl EnvState {
    pub fn key(&self) -> StateKey {
        StateKey {
            served: self.served,
            last_position: self.last_position,
        }
    }

    pub fn num_served(&self) -> u32 {
        self.served.count_ones()
    }

    pub fn num_satisfied(&self) -> u32 {
        self.satisfied.count_ones()
    }
}

/// What a step pays out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// 1 when the newly served user met its deadline, else 0. Episode returns
    /// then telescope to the satisfied-user objective.
    #[default]
    IncrementalSatisfied,
    /// Number of users served so far, deadlines ignored.
    CumulativeServed,
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardMode::IncrementalSatisfied => write!(f, "incremental-satisfied"),
            RewardMode::CumulativeServed => write!(f, "cumulative-served"),
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incremental-satisfied" => Ok(RewardMode::IncrementalSatisfied),
            "cumulative-served" => Ok(RewardMode::CumulativeServed),
            _ => Err(Error::UnknownName {
                what: "reward mode",
                value: s.to_string(),
                expected: "incremental-satisfied | cumulative-served",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EnvConfig {
    #[serde(default)]
    pub reward_mode: RewardMode,
    /// Terminate early once no unserved user can still meet its deadline.
    #[serde(default)]
    pub early_stop: bool,
}

/// Deterministic environment over one scenario.
#[derive(Debug, Clone)]
pub struct UavEnv {
    scenario: Scenario,
    times: ServiceTimes,
    config: EnvConfig,
}

impl UavEnv {
    pub fn new(scenario: &Scenario, config: EnvConfig) -> Result<Self> {
        if scenario.num_users() > 64 {
            return Err(Error::invalid(
                "users",
                format!("tabular environment supports at most 64 users, got {}", scenario.num_users()),
            ));
        }
        Ok(UavEnv {
            times: ServiceTimes::new(scenario)?,
            scenario: scenario.clone(),
            config,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn times(&self) -> &ServiceTimes {
        &self.times
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    pub fn num_users(&self) -> usize {
        self.scenario.num_users()
    }

    fn full_mask(&self) -> u64 {
        if self.num_users() == 64 {
            u64::MAX
        } else {
            (1u64 << self.num_users()) - 1
        }
    }

    /// Fresh episode: nothing served, UAV at its start point, clock at zero.
    pub fn reset(&self) -> EnvState {
        EnvState {
            served: 0,
            last_position: None,
            elapsed: 0.0,
            satisfied: 0,
        }
    }

    /// All unserved users, in ascending id order.
    pub fn available_actions(&self, state: &EnvState) -> Vec<Action> {
        (0..self.num_users())
            .filter(|&u| state.served & (1 << u) == 0)
            .map(Action)
            .collect()
    }

    pub fn is_terminal(&self, state: &EnvState) -> bool {
        if state.served == self.full_mask() {
            return true;
        }
        self.config.early_stop && self.no_feasible_remaining(state)
    }

    /// True when every unserved user would miss its deadline even if flown to
    /// immediately.
    fn no_feasible_remaining(&self, state: &EnvState) -> bool {
        (0..self.num_users())
            .filter(|&u| state.served & (1 << u) == 0)
            .all(|u| {
                let finish = state.elapsed
                    + self.times.flight_time(state.last_position, u)
                    + self.times.tx_time(u);
                finish > self.times.endurance(u)
            })
    }

    /// Serves `action.0`: advances the clock, marks the user served (and
    /// satisfied when it met its deadline), and pays the configured reward.
    pub fn step(&self, state: &EnvState, action: Action) -> Result<(EnvState, f64, bool)> {
        let user = action.0;
        if user >= self.num_users() {
            return Err(Error::UnknownUser {
                user,
                num_users: self.num_users(),
            });
        }
        if state.served & (1 << user) != 0 {
            return Err(Error::IllegalAction { user });
        }
        let elapsed = state.elapsed
            + self.times.flight_time(state.last_position, user)
            + self.times.tx_time(user);
        let mut next = EnvState {
            served: state.served | (1 << user),
            last_position: Some(user),
            elapsed,
            satisfied: state.satisfied,
        };
        if elapsed <= self.times.endurance(user) {
            next.satisfied |= 1 << user;
        }
        let r = reward(state, &next, self.config.reward_mode);
        let terminal = self.is_terminal(&next);
        Ok((next, r, terminal))
    }
}

/// Reward of the transition `before -> after` under the given mode.
pub fn reward(before: &EnvState, after: &EnvState, mode: RewardMode) -> f64 {
    match mode {
        RewardMode::IncrementalSatisfied => {
            (after.satisfied & !before.satisfied).count_ones() as f64
        }
        RewardMode::CumulativeServed => after.served.count_ones() as f64,
    }
}
