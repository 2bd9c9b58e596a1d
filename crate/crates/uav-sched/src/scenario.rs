//! Problem instances: users, UAV configuration, channel parameters, and
//! reproducible generation from a sampling distribution.
//!
//! The on-disk scenario format is TOML:
//!
//! ```toml
//! seed = 42
//!
//! [[users]]
//! id = 0
//! kind = "ground"        # "ground" | "aerial"
//! x = 12.5               # meters
//! y = -80.0
//! h = 0.0                # ground users are at h = 0
//! data_size_bits = 5e7
//! endurance_s = 50.0
//!
//! [uav]
//! altitude_m = 100.0
//! speed_mps = 50.0
//! tx_power_w = 5.0
//! bandwidth_hz = 1e6
//! start_x = 0.0
//! start_y = 0.0
//!
//! [channel]
//! alpha = 2.0            # path loss exponent
//! eta_nlos = 0.3         # linear NLoS attenuation factor
//! eta_los_db = 2.0       # additional mmWave LoS attenuation, dB
//! env_x = 11.95
//! env_y = 0.136
//! noise_power_dbm = -74.0
//! mmwave_freq_hz = 3.5e10
//! # light_speed_mps = 3e8            (optional)
//! # aerial_bandwidth_hz = 1e8        (optional, defaults to uav bandwidth)
//! ```
//!
//! Noise power lives in dBm both on disk and in memory (so round-trips are
//! exact); use [`ChannelParams::noise_power_w`] wherever watts are needed.
//! Seeds are limited to `0..2^63` by TOML's integer range.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Aerial users fly at or above this altitude.
pub const DEFAULT_AERIAL_MIN_ALTITUDE_M: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserKind {
    Ground,
    Aerial,
}

impl std::fmt::Display for UserKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UserKind::Ground => write!(f, "ground"),
            UserKind::Aerial => write!(f, "aerial"),
        }
    }
}

/// One user: 3D position, requested data volume, and deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: usize,
    pub kind: UserKind,
    /// Horizontal position, meters.
    pub x: f64,
    pub y: f64,
    /// Altitude, meters. Exactly 0 for ground users.
    pub h: f64,
    /// Requested data volume, bits.
    #[serde(rename = "data_size_bits")]
    pub data_size: f64,
    /// Maximum tolerated total delay (waiting + transmission), seconds.
    #[serde(rename = "endurance_s")]
    pub endurance: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            UserKind::Ground if self.h != 0.0 => {
                return Err(Error::invalid(
                    "users.h",
                    format!("ground user {} must have h = 0, got {}", self.id, self.h),
                ));
            }
            UserKind::Aerial if self.h < DEFAULT_AERIAL_MIN_ALTITUDE_M => {
                return Err(Error::invalid(
                    "users.h",
                    format!(
                        "aerial user {} must fly at h >= {} m, got {}",
                        self.id, DEFAULT_AERIAL_MIN_ALTITUDE_M, self.h
                    ),
                ));
            }
            _ => {}
        }
        if !(self.data_size > 0.0) {
            return Err(Error::invalid(
                "users.data_size_bits",
                format!("user {} must request a positive volume, got {}", self.id, self.data_size),
            ));
        }
        if !(self.endurance > 0.0) {
            return Err(Error::invalid(
                "users.endurance_s",
                format!("user {} must have a positive endurance, got {}", self.id, self.endurance),
            ));
        }
        Ok(())
    }
}

/// UAV flight and radio configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavConfig {
    /// Fixed serving altitude H, meters.
    #[serde(rename = "altitude_m")]
    pub altitude: f64,
    /// Cruise speed, meters/second.
    #[serde(rename = "speed_mps")]
    pub speed: f64,
    /// Transmit power, watts.
    #[serde(rename = "tx_power_w")]
    pub tx_power: f64,
    /// Downlink bandwidth, hertz.
    #[serde(rename = "bandwidth_hz")]
    pub bandwidth: f64,
    pub start_x: f64,
    pub start_y: f64,
}

impl Default for UavConfig {
    fn default() -> Self {
        UavConfig {
            altitude: 100.0,
            speed: 50.0,
            tx_power: 5.0,
            bandwidth: 1e6,
            start_x: 0.0,
            start_y: 0.0,
        }
    }
}

impl UavConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("uav.altitude_m", self.altitude),
            ("uav.speed_mps", self.speed),
            ("uav.tx_power_w", self.tx_power),
            ("uav.bandwidth_hz", self.bandwidth),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Hovering point from which user `i` is served: directly above/below the
    /// user at altitude H.
    pub fn hover_point(&self, user: &UserProfile) -> (f64, f64, f64) {
        (user.x, user.y, self.altitude)
    }
}

/// Propagation-model constants shared by all links of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path loss exponent for the ground link.
    #[serde(rename = "alpha")]
    pub path_loss_exponent: f64,
    /// Additional NLoS attenuation, linear factor in (0, 1].
    #[serde(rename = "eta_nlos")]
    pub nlos_attenuation: f64,
    /// Additional mmWave LoS attenuation, dB.
    #[serde(rename = "eta_los_db")]
    pub los_attenuation_db: f64,
    /// Environment constant X (dimensionless), calibrated for degrees.
    pub env_x: f64,
    /// Environment constant Y (per degree).
    pub env_y: f64,
    /// Receiver noise power, dBm.
    pub noise_power_dbm: f64,
    /// mmWave carrier frequency, hertz.
    #[serde(rename = "mmwave_freq_hz")]
    pub mmwave_freq: f64,
    /// Speed of light, meters/second.
    #[serde(rename = "light_speed_mps", default = "default_light_speed")]
    pub light_speed: f64,
    /// Optional bandwidth override for aerial (mmWave) links, hertz. When
    /// absent, aerial links use the UAV's downlink bandwidth.
    #[serde(
        rename = "aerial_bandwidth_hz",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub aerial_bandwidth: Option<f64>,
}

fn default_light_speed() -> f64 {
    3e8
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            path_loss_exponent: 2.0,
            nlos_attenuation: 0.3,
            los_attenuation_db: 2.0,
            env_x: 11.95,
            env_y: 0.136,
            noise_power_dbm: -74.0,
            mmwave_freq: 35e9,
            light_speed: default_light_speed(),
            aerial_bandwidth: None,
        }
    }
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ChannelParams {
    /// Noise power sigma^2 in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nlos_attenuation > 0.0 && self.nlos_attenuation <= 1.0) {
            return Err(Error::invalid(
                "channel.eta_nlos",
                format!("must be in (0, 1], got {}", self.nlos_attenuation),
            ));
        }
        for (field, v) in [
            ("channel.alpha", self.path_loss_exponent),
            ("channel.env_x", self.env_x),
            ("channel.env_y", self.env_y),
            ("channel.mmwave_freq_hz", self.mmwave_freq),
            ("channel.light_speed_mps", self.light_speed),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::invalid(
                "channel.noise_power_dbm",
                format!("must be finite, got {}", self.noise_power_dbm),
            ));
        }
        if let Some(bw) = self.aerial_bandwidth {
            if !(bw > 0.0) {
                return Err(Error::invalid(
                    "channel.aerial_bandwidth_hz",
                    format!("must be positive, got {bw}"),
                ));
            }
        }
        Ok(())
    }
}

/// A complete, immutable problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<UserProfile>,
    pub uav: UavConfig,
    pub channel: ChannelParams,
    pub seed: u64,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(Error::invalid("users", "scenario must have at least one user"));
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.id != i {
                return Err(Error::invalid(
                    "users.id",
                    format!("ids must be exactly 0..{} with no duplicates; position {i} has id {}", self.users.len(), u.id),
                ));
            }
            u.validate()?;
        }
        self.uav.validate()?;
        self.channel.validate()?;
        Ok(())
    }

    /// Canonical TOML serialization; also the preimage of [`Scenario::sha256`].
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialize {
            what: "scenario",
            source: Box::new(e),
        })
    }

    /// Hex SHA-256 of the canonical serialization. Used to tie q-table
    /// snapshots to the scenario that produced them.
    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Sampling distribution over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDistribution {
    /// Radius of the service disc, meters. Users are uniform over its area.
    #[serde(rename = "region_radius_m")]
    pub region_radius: f64,
    pub num_ground: usize,
    pub num_aerial: usize,
    /// Aerial altitudes are uniform over `[min, max]`, meters.
    #[serde(rename = "aerial_altitude_range_m")]
    pub aerial_altitude_range: [f64; 2],
    /// Requested volumes are uniform over `[min, max]`, bits.
    #[serde(rename = "data_size_range_bits")]
    pub data_size_range: [f64; 2],
    /// Endurance applied to every generated user, seconds.
    #[serde(rename = "endurance_s")]
    pub endurance: f64,
    #[serde(default)]
    pub uav: UavConfig,
    #[serde(default)]
    pub channel: ChannelParams,
}

impl Default for ScenarioDistribution {
    fn default() -> Self {
        ScenarioDistribution {
            region_radius: 200.0,
            num_ground: 10,
            num_aerial: 10,
            aerial_altitude_range: [50.0, 150.0],
            data_size_range: [1e7, 1e8], // 10..100 megabits
            endurance: 50.0,
            uav: UavConfig::default(),
            channel: ChannelParams::default(),
        }
    }
}

impl ScenarioDistribution {
    pub fn num_users(&self) -> usize {
        self.num_ground + self.num_aerial
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.region_radius > 0.0) {
            return Err(Error::invalid(
                "region_radius_m",
                format!("must be positive, got {}", self.region_radius),
            ));
        }
        if self.num_users() == 0 {
            return Err(Error::invalid(
                "num_ground",
                "num_ground + num_aerial must be at least 1",
            ));
        }
        let [alo, ahi] = self.aerial_altitude_range;
        if !(alo <= ahi) {
            return Err(Error::invalid(
                "aerial_altitude_range_m",
                format!("empty range [{alo}, {ahi}]"),
            ));
        }
        if self.num_aerial > 0 && alo < DEFAULT_AERIAL_MIN_ALTITUDE_M {
            return Err(Error::invalid(
                "aerial_altitude_range_m",
                format!("aerial users fly at >= {DEFAULT_AERIAL_MIN_ALTITUDE_M} m, got min {alo}"),
            ));
        }
        let [dlo, dhi] = self.data_size_range;
        if !(dlo <= dhi) {
            return Err(Error::invalid(
                "data_size_range_bits",
                format!("empty range [{dlo}, {dhi}]"),
            ));
        }
        if !(dlo > 0.0) {
            return Err(Error::invalid(
                "data_size_range_bits",
                format!("volumes must be positive, got min {dlo}"),
            ));
        }
        if !(self.endurance > 0.0) {
            return Err(Error::invalid(
                "endurance_s",
                format!("must be positive, got {}", self.endurance),
            ));
        }
        self.uav.validate()?;
        self.channel.validate()?;
        Ok(())
    }
}

/// Draws a scenario from `dist`. Ground users come first (ids `0..num_ground`),
/// then aerial users. Positions are uniform over the disc area; the same seed
/// always yields a bit-identical scenario.
pub fn generate_scenario(dist: &ScenarioDistribution, seed: u64) -> Result<Scenario> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(dist.num_users());
    for id in 0..dist.num_users() {
        let kind = if id < dist.num_ground {
            UserKind::Ground
        } else {
            UserKind::Aerial
        };
        let theta = rng.random_range(0.0..TAU);
        // Radius ~ r * sqrt(U(0,1)) makes the density uniform per unit area.
        let radius = dist.region_radius * rng.random::<f64>().sqrt();
        let h = match kind {
            UserKind::Ground => 0.0,
            UserKind::Aerial => {
                let [lo, hi] = dist.aerial_altitude_range;
                rng.random_range(lo..=hi)
            }
        };
        let [dlo, dhi] = dist.data_size_range;
        users.push(UserProfile {
            id,
            kind,
            x: radius * theta.cos(),
            y: radius * theta.sin(),
            h,
            data_size: rng.random_range(dlo..=dhi),
            endurance: dist.endurance,
        });
    }
    Ok(Scenario {
        users,
        uav: dist.uav.clone(),
        channel: dist.channel.clone(),
        seed,
    })
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, s.to_toml()?).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut s: Scenario = toml::from_str(&text).map_err(|e| Error::Parse {
        what: "scenario",
        path: path.to_path_buf(),
        source: Box::new(e),
    })?;
    // Files may list users in any order; ids are canonical.
    s.users.sort_by_key(|u| u.id);
    s.validate()?;
    Ok(s)
}
