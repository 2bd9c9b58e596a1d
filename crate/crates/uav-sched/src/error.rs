use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by scenario handling, link math, evaluation, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented range. `field` names the offender.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what} {path}: {source}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },

    #[error("failed to serialize {what}: {source}")]
    Serialize {
        what: &'static str,
        #[source]
        source: Box<toml::ser::Error>,
    },

    #[error("uav speed must be positive, got {0}")]
    NonPositiveSpeed(f64),

    #[error("link distance is zero; gain/path loss are undefined at d = 0")]
    ZeroDistance,

    #[error("user {user} has non-positive rate {rate} bit/s and cannot be served")]
    UnserveableUser { user: usize, rate: f64 },

    #[error("user {user} appears more than once in the service order")]
    DuplicateOrderEntry { user: usize },

    #[error("service order names unknown user {user} (scenario has {num_users} users)")]
    UnknownUser { user: usize, num_users: usize },

    #[error("action targets user {user}, which is already served")]
    IllegalAction { user: usize },

    #[error("no legal actions: all users are already served")]
    NoActions,

    #[error(
        "exhaustive search over {users} users refused: {users}! permutations exceeds the cap of {cap} users"
    )]
    OracleCapExceeded { users: usize, cap: usize },

    #[error("q-table snapshot was trained on scenario {snapshot_hash}, not {scenario_hash}")]
    SnapshotScenarioMismatch {
        snapshot_hash: String,
        scenario_hash: String,
    },

    #[error("unknown {what} {value:?}, expected one of {expected}")]
    UnknownName {
        what: &'static str,
        value: String,
        expected: &'static str,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for CLI front ends: 2 for infeasible requests
    /// (combinatorial explosion), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OracleCapExceeded { .. } => 2,
            _ => 1,
        }
    }
}
