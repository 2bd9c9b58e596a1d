//! Service scheduling for a single UAV base station.
//!
//! A UAV flies between users (on the ground and in the air), serving one
//! request at a time; a user is satisfied when its request completes within
//! its endurance time. This crate models the links and timing chain, scores
//! visiting orders against the satisfied-user objective, and learns good
//! orders with tabular double Q-learning, validated against an exhaustive
//! small-instance optimum.
//!
//! - [`scenario`]: problem instances, generation, and the TOML file format
//! - [`channel`]: ground (probabilistic LoS/NLoS) and aerial (mmWave) links
//! - [`schedule`]: order evaluation, the objective, and the exhaustive oracle
//! - [`mdp`]: the finite decision process the learners run on
//! - [`learning`]: double Q-learning, the single-table baseline, random policy
//! - [`experiment`]: sweeps, Monte Carlo averaging, and CSV reports

pub mod channel;
pub mod error;
pub mod experiment;
pub mod learning;
pub mod mdp;
pub mod scenario;
pub mod schedule;

pub use error::{Error, Result};
