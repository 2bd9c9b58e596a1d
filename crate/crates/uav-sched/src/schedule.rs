//! Service-order evaluation: per-user timing chains, satisfaction flags, the
//! satisfied-user objective, and an exhaustive optimum for small instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// A visiting order: position `k` holds the id of the user served `k`-th.
/// May cover only a subset of the users; absent users are unserved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceOrder(Vec<usize>);

impl ServiceOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &u in &order {
            if !seen.insert(u) {
                return Err(Error::DuplicateOrderEntry { user: u });
            }
        }
        Ok(ServiceOrder(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::fmt::Display for ServiceOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|u| u.to_string()).collect();
        write!(f, "{}", ids.join(","))
    }
}

impl std::str::FromStr for ServiceOrder {
    type Err = Error;

    /// Parses a comma-separated id list such as `2,0,1`.
    fn from_str(s: &str) -> Result<Self> {
        let mut ids = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let id: usize = part.parse().map_err(|_| Error::UnknownName {
                what: "service order entry",
                value: part.to_string(),
                expected: "comma-separated user ids, e.g. 2,0,1",
            })?;
            ids.push(id);
        }
        ServiceOrder::new(ids)
    }
}

/// Timing chain of one served user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserServiceRecord {
    pub user: usize,
    /// 0-based position in the service order.
    pub position: usize,
    /// Flight seconds from the previous hovering point.
    pub flight_time: f64,
    /// When the UAV started flying here: total time of the predecessor.
    pub start_time: f64,
    /// Waiting delay: start + flight.
    pub wait_time: f64,
    /// Transmission seconds.
    pub tx_time: f64,
    /// Completion time: wait + transmission.
    pub total_time: f64,
    /// Completion no later than the user's endurance.
    pub satisfied: bool,
}

/// Evaluation of a full or partial service order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleEvaluation {
    /// One record per served user, in service order.
    pub records: Vec<UserServiceRecord>,
    pub satisfied_count: u32,
    /// Bitmask of served user ids.
    pub served_set: u64,
}

impl ScheduleEvaluation {
    pub fn record_for(&self, user: usize) -> Option<&UserServiceRecord> {
        self.records.iter().find(|r| r.user == user)
    }
}

/// Per-scenario timing constants: serving rates are fixed by geometry (the
/// UAV serves from directly above/below each user), so transmission times and
/// pairwise flight times can be computed once and reused across orders.
#[derive(Debug, Clone)]
pub struct ServiceTimes {
    tx: Vec<f64>,
    from_start: Vec<f64>,
    between: Vec<Vec<f64>>,
    endurance: Vec<f64>,
}

impl ServiceTimes {
    pub fn new(s: &Scenario) -> Result<Self> {
        s.validate()?;
        let n = s.num_users();
        let mut tx = Vec::with_capacity(n);
        for u in &s.users {
            let rate = channel::service_rate(&s.uav, &s.channel, u)?;
            tx.push(channel::transmission_delay(u, rate)?);
        }
        let start = (s.uav.start_x, s.uav.start_y);
        let mut from_start = Vec::with_capacity(n);
        let mut between = vec![vec![0.0; n]; n];
        for (i, u) in s.users.iter().enumerate() {
            // Hovering points all sit at altitude H, so legs are horizontal.
            let d0 = (u.x - start.0).hypot(u.y - start.1);
            from_start.push(channel::flight_time(d0, s.uav.speed)?);
            for (j, v) in s.users.iter().enumerate() {
                let d = (u.x - v.x).hypot(u.y - v.y);
                between[i][j] = channel::flight_time(d, s.uav.speed)?;
            }
        }
        Ok(ServiceTimes {
            tx,
            from_start,
            between,
            endurance: s.users.iter().map(|u| u.endurance).collect(),
        })
    }

    pub fn num_users(&self) -> usize {
        self.tx.len()
    }

    /// Transmission seconds for user `i`.
    pub fn tx_time(&self, i: usize) -> f64 {
        self.tx[i]
    }

    /// Flight seconds from the previous hovering point (`None` = UAV start).
    pub fn flight_time(&self, from: Option<usize>, to: usize) -> f64 {
        match from {
            None => self.from_start[to],
            Some(i) => self.between[i][to],
        }
    }

    pub fn endurance(&self, i: usize) -> f64 {
        self.endurance[i]
    }
}

/// Walks the order through the timing chain: the first user starts at zero,
/// each later user starts when its predecessor's service completes.
pub fn evaluate_order(s: &Scenario, order: &ServiceOrder) -> Result<ScheduleEvaluation> {
    evaluate_order_with(&ServiceTimes::new(s)?, order)
}

/// As [`evaluate_order`], reusing precomputed timing constants.
pub fn evaluate_order_with(times: &ServiceTimes, order: &ServiceOrder) -> Result<ScheduleEvaluation> {
    let n = times.num_users();
    let mut seen = vec![false; n];
    let mut records = Vec::with_capacity(order.len());
    let mut previous: Option<usize> = None;
    let mut previous_total = 0.0;
    let mut satisfied_count = 0u32;
    let mut served_set = 0u64;
    for (position, &user) in order.as_slice().iter().enumerate() {
        if user >= n {
            return Err(Error::UnknownUser { user, num_users: n });
        }
        if seen[user] {
            return Err(Error::DuplicateOrderEntry { user });
        }
        seen[user] = true;
        let flight_time = times.flight_time(previous, user);
        let start_time = previous_total;
        let wait_time = start_time + flight_time;
        let tx_time = times.tx_time(user);
        let total_time = wait_time + tx_time;
        let satisfied = total_time <= times.endurance(user);
        if satisfied {
            satisfied_count += 1;
        }
        served_set |= 1u64 << user;
        records.push(UserServiceRecord {
            user,
            position,
            flight_time,
            start_time,
            wait_time,
            tx_time,
            total_time,
            satisfied,
        });
        previous = Some(user);
        previous_total = total_time;
    }
    Ok(ScheduleEvaluation {
        records,
        satisfied_count,
        served_set,
    })
}

/// The optimization objective: number of satisfied users.
pub fn objective(eval: &ScheduleEvaluation) -> u32 {
    eval.satisfied_count
}

/// Largest instance the exhaustive search will accept by default
/// (9! = 362,880 orders).
pub const DEFAULT_ORACLE_CAP: usize = 9;

/// Exhaustively evaluates all U! full service orders and returns one that
/// maximizes the satisfied-user count, breaking ties toward the
/// lexicographically smallest order.
pub fn brute_force_optimum(s: &Scenario) -> Result<(ServiceOrder, u32)> {
    brute_force_optimum_capped(s, DEFAULT_ORACLE_CAP)
}

/// As [`brute_force_optimum`] with an explicit instance-size cap.
pub fn brute_force_optimum_capped(s: &Scenario, cap: usize) -> Result<(ServiceOrder, u32)> {
    let n = s.num_users();
    if n > cap {
        return Err(Error::OracleCapExceeded { users: n, cap });
    }
    let times = ServiceTimes::new(s)?;
    // Partition the permutation space by first user; the reduction below is
    // a pure function of the branch results, so parallelism cannot change it.
    let branch_bests: Vec<(u32, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|first| {
            let rest: Vec<usize> = (0..n).filter(|&u| u != first).collect();
            let mut best: Option<(u32, Vec<usize>)> = None;
            let mut perm = Vec::with_capacity(n);
            for tail in permutations_of(&rest) {
                perm.clear();
                perm.push(first);
                perm.extend_from_slice(&tail);
                let value = count_satisfied(&times, &perm);
                let better = match &best {
                    None => true,
                    Some((bv, border)) => value > *bv || (value == *bv && perm < *border),
                };
                if better {
                    best = Some((value, perm.clone()));
                }
            }
            best.expect("at least one permutation per branch")
        })
        .collect();
    let (value, order) = branch_bests
        .into_iter()
        .reduce(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("U >= 1");
    Ok((ServiceOrder(order), value))
}

/// Satisfied-user count of a full permutation, without building records.
fn count_satisfied(times: &ServiceTimes, perm: &[usize]) -> u32 {
    let mut previous: Option<usize> = None;
    let mut elapsed = 0.0;
    let mut satisfied = 0u32;
    for &user in perm {
        elapsed += times.flight_time(previous, user) + times.tx_time(user);
        if elapsed <= times.endurance(user) {
            satisfied += 1;
        }
        previous = Some(user);
    }
    satisfied
}

fn permutations_of(items: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    use itertools::Itertools;
    items.iter().copied().permutations(items.len())
}

/// Per-user evaluation rows, one per user id; unserved users carry empty
/// timing columns.
pub fn evaluation_csv(s: &Scenario, eval: &ScheduleEvaluation) -> String {
    let mut out = String::from(
        "user_id,kind,order_position,flight_s,start_s,wait_s,tx_s,total_s,endurance_s,satisfied\n",
    );
    for u in &s.users {
        match eval.record_for(u.id) {
            Some(r) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    u.id,
                    u.kind,
                    r.position,
                    r.flight_time,
                    r.start_time,
                    r.wait_time,
                    r.tx_time,
                    r.total_time,
                    u.endurance,
                    r.satisfied
                ));
            }
            None => {
                out.push_str(&format!("{},{},,,,,,,{},false\n", u.id, u.kind, u.endurance));
            }
        }
    }
    out
}
