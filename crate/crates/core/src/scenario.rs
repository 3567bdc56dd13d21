//! System instances: physical constants, user drops and per-sub-channel gains.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::CompressionRatio;

/// Users closer than this are clamped so the log-distance pathloss stays finite.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("scenario invariant violated at `{path}`: {message}")]
    Invariant { path: String, message: String },
    #[error("malformed scenario document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Physical-layer and traffic constants shared by every user of one instance.
///
/// Missing keys in a configuration document fall back to the reference
/// simulation setup (30 users, 30 RBs, 100 sub-channels, 1 W budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_rbs: usize,
    pub num_subchannels: usize,
    pub bandwidth_hz: f64,
    pub symbol_duration_s: f64,
    pub noise_power_per_subchannel_w: f64,
    pub bs_power_budget_w: f64,
    pub cell_radius_m: f64,
    pub source_symbols: u32,
    pub cr_set: Vec<CompressionRatio>,
    pub rng_seed: u64,
    /// Closed range `[lo, hi]` the per-user delay bound is drawn from.
    pub delay_bound_range_s: [f64; 2],
    /// Closed range `[lo, hi]` the per-user PSNR floor is drawn from.
    pub psnr_bound_range_db: [f64; 2],
    /// Shadowing loss is drawn once per user from `[0, shadowing_max_db]`.
    pub shadowing_max_db: f64,
}

/// -114 dBm expressed in watts.
pub fn default_noise_power_w() -> f64 {
    dbm_to_watts(-114.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_users: 30,
            num_rbs: 30,
            num_subchannels: 100,
            bandwidth_hz: 3.0e6,
            symbol_duration_s: 33.3e-6,
            noise_power_per_subchannel_w: default_noise_power_w(),
            bs_power_budget_w: 1.0,
            cell_radius_m: 500.0,
            source_symbols: 3072,
            cr_set: CompressionRatio::default_set(),
            rng_seed: 0,
            delay_bound_range_s: [4.0e-3, 6.0e-3],
            psnr_bound_range_db: [20.0, 25.0],
            shadowing_max_db: 10.0,
        }
    }
}

impl SystemConfig {
    /// Sub-channels per resource block, `floor(S / M)`.
    pub fn subchannels_per_rb(&self) -> usize {
        self.num_subchannels.checked_div(self.num_rbs).unwrap_or(0)
    }

    /// Sub-channel index range covered by resource block `rb`.
    pub fn rb_subchannels(&self, rb: usize) -> std::ops::Range<usize> {
        let s0 = self.subchannels_per_rb();
        rb * s0..(rb + 1) * s0
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: &str| Err(ScenarioError::Config(msg.to_string()));
        if self.num_rbs == 0 {
            return fail("num_rbs must be at least 1");
        }
        if self.subchannels_per_rb() < 1 {
            return fail(
                "subchannels_per_rb = floor(num_subchannels / num_rbs) must be at least 1",
            );
        }
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("symbol_duration_s", self.symbol_duration_s),
            (
                "noise_power_per_subchannel_w",
                self.noise_power_per_subchannel_w,
            ),
            ("cell_radius_m", self.cell_radius_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.bs_power_budget_w.is_finite() && self.bs_power_budget_w >= 0.0) {
            return fail("bs_power_budget_w must be finite and >= 0");
        }
        if self.source_symbols == 0 {
            return fail("source_symbols must be > 0");
        }
        if self.cr_set.is_empty() {
            return fail("cr_set must not be empty");
        }
        if !self.cr_set.windows(2).all(|w| w[0] < w[1]) {
            return fail("cr_set must be strictly increasing");
        }
        let [dlo, dhi] = self.delay_bound_range_s;
        if !(dlo.is_finite() && dhi.is_finite() && dlo > 0.0 && dlo <= dhi) {
            return fail("delay_bound_range_s must satisfy 0 < lo <= hi");
        }
        let [plo, phi] = self.psnr_bound_range_db;
        if !(plo.is_finite() && phi.is_finite() && plo <= phi) {
            return fail("psnr_bound_range_db must satisfy lo <= hi");
        }
        if !(self.shadowing_max_db.is_finite() && self.shadowing_max_db >= 0.0) {
            return fail("shadowing_max_db must be finite and >= 0");
        }
        Ok(())
    }
}

/// One receiver: position, requirements and its channel on every sub-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub distance_m: f64,
    pub delay_bound_s: f64,
    pub psnr_bound_db: f64,
    /// Linear-scale `|h_{k,s}|^2`, one entry per sub-channel.
    pub channel_gain_sq: Vec<f64>,
}

impl User {
    /// Gains restricted to the sub-channels of resource block `rb`.
    pub fn rb_gains<'a>(&'a self, config: &SystemConfig, rb: usize) -> &'a [f64] {
        &self.channel_gain_sq[config.rb_subchannels(rb)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub users: Vec<User>,
}

/// Log-distance pathloss in dB, `128.1 + 37.6 log10(d_km)`.
pub fn pathloss_db(distance_m: f64) -> f64 {
    let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    128.1 + 37.6 * d_km.log10()
}

/// Linear channel power gain given pathloss geometry, shadowing loss and the
/// small-scale fading power `|g|^2`.
pub fn channel_gain_sq(distance_m: f64, shadowing_db: f64, fading_sq: f64) -> f64 {
    10f64.powf(-(pathloss_db(distance_m) + shadowing_db) / 10.0) * fading_sq
}

fn uniform_in(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws one user from its own ChaCha stream, so adding users never perturbs
/// the ones already drawn for the same seed.
fn draw_user(config: &SystemConfig, id: usize) -> User {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(id as u64);

    // uniform over the disk area
    let radius = config.cell_radius_m * rng.random::<f64>().sqrt();
    let distance_m = radius.max(MIN_DISTANCE_M);
    let shadowing_db = config.shadowing_max_db * rng.random::<f64>();
    let delay_bound_s = uniform_in(&mut rng, config.delay_bound_range_s);
    let psnr_bound_db = uniform_in(&mut rng, config.psnr_bound_range_db);

    // CN(0, 1): each quadrature carries half the power
    let quad = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("finite std");
    let channel_gain_sq = (0..config.num_subchannels)
        .map(|_| {
            let re: f64 = quad.sample(&mut rng);
            let im: f64 = quad.sample(&mut rng);
            channel_gain_sq(distance_m, shadowing_db, re * re + im * im)
        })
        .collect();

    User {
        id,
        distance_m,
        delay_bound_s,
        psnr_bound_db,
        channel_gain_sq,
    }
}

/// Drops `num_users` users uniformly in the cell and draws their channels and
/// requirements. Deterministic in `config.rng_seed`.
pub fn generate_scenario(config: &SystemConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let users = (0..config.num_users)
        .map(|k| draw_user(config, k))
        .collect();
    Ok(Scenario {
        config: config.clone(),
        users,
    })
}

impl Scenario {
    /// Builds a scenario from explicit parts, checking every invariant.
    pub fn new(config: SystemConfig, users: Vec<User>) -> Result<Self, ScenarioError> {
        let scenario = Self { config, users };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_rbs(&self) -> usize {
        self.config.num_rbs
    }

    /// Same instance under a different power budget.
    pub fn with_budget(&self, budget_w: f64) -> Self {
        let mut s = self.clone();
        s.config.bs_power_budget_w = budget_w;
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.config.validate()?;
        if self.users.len() != self.config.num_users {
            return Err(ScenarioError::Invariant {
                path: "users".into(),
                message: format!(
                    "expected {} users (config.num_users), found {}",
                    self.config.num_users,
                    self.users.len()
                ),
            });
        }
        for (idx, user) in self.users.iter().enumerate() {
            let path = |field: &str| format!("users[{idx}].{field}");
            let bad = |field: &str, message: String| ScenarioError::Invariant {
                path: path(field),
                message: format!("user {}: {message}", user.id),
            };
            if user.id != idx {
                return Err(bad(
                    "id",
                    format!("ids must be dense 0..K-1, expected {idx}"),
                ));
            }
            if !(user.distance_m.is_finite() && user.distance_m > 0.0) {
                return Err(bad(
                    "distance_m",
                    format!("must be > 0, got {}", user.distance_m),
                ));
            }
            if !(user.delay_bound_s.is_finite() && user.delay_bound_s > 0.0) {
                return Err(bad(
                    "delay_bound_s",
                    format!("must be > 0, got {}", user.delay_bound_s),
                ));
            }
            if !user.psnr_bound_db.is_finite() {
                return Err(bad("psnr_bound_db", "must be finite".into()));
            }
            if user.channel_gain_sq.len() != self.config.num_subchannels {
                return Err(bad(
                    "channel_gain_sq",
                    format!(
                        "expected {} entries, found {}",
                        self.config.num_subchannels,
                        user.channel_gain_sq.len()
                    ),
                ));
            }
            if let Some(s) = user
                .channel_gain_sq
                .iter()
                .position(|g| !(g.is_finite() && *g >= 0.0))
            {
                return Err(bad(
                    "channel_gain_sq",
                    format!("entry {s} must be finite and >= 0"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Parses and validates a scenario document. Structural problems are
    /// reported with the path of the offending field.
    pub fn from_json(doc: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(doc)?;
        let config = raw.config.ok_or_else(|| ScenarioError::Parse {
            path: "config".into(),
            message: "missing".into(),
        })?;
        let raw_users = raw.users.ok_or_else(|| ScenarioError::Parse {
            path: "users".into(),
            message: "missing".into(),
        })?;
        let mut users = Vec::with_capacity(raw_users.len());
        for (idx, u) in raw_users.into_iter().enumerate() {
            let id = u.id.ok_or_else(|| ScenarioError::Parse {
                path: format!("users[{idx}].id"),
                message: "missing".into(),
            })?;
            let missing = |field: &str| ScenarioError::Parse {
                path: format!("users[{idx}].{field}"),
                message: format!("missing for user {id}"),
            };
            users.push(User {
                id,
                distance_m: u.distance_m.ok_or_else(|| missing("distance_m"))?,
                delay_bound_s: u.delay_bound_s.ok_or_else(|| missing("delay_bound_s"))?,
                psnr_bound_db: u.psnr_bound_db.ok_or_else(|| missing("psnr_bound_db"))?,
                channel_gain_sq: u
                    .channel_gain_sq
                    .ok_or_else(|| missing("channel_gain_sq"))?,
            });
        }
        Scenario::new(config, users)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    config: Option<SystemConfig>,
    users: Option<Vec<RawUser>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUser {
    id: Option<usize>,
    distance_m: Option<f64>,
    delay_bound_s: Option<f64>,
    psnr_bound_db: Option<f64>,
    channel_gain_sq: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SystemConfig {
        SystemConfig {
            num_users: 4,
            num_rbs: 3,
            num_subchannels: 9,
            rng_seed: 11,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn pathloss_at_one_km() {
        let g = channel_gain_sq(1000.0, 0.0, 1.0);
        let expected = 10f64.powf(-12.81);
        assert!(((g - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn pathloss_is_monotone_in_distance() {
        let gains: Vec<f64> = [1.0, 10.0, 50.0, 100.0, 250.0, 499.0, 500.0]
            .iter()
            .map(|&d| channel_gain_sq(d, 5.0, 1.0))
            .collect();
        assert!(gains.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_distance_is_clamped() {
        assert!(pathloss_db(0.0).is_finite());
        assert_eq!(pathloss_db(0.0), pathloss_db(MIN_DISTANCE_M));
    }

    #[test]
    fn noise_default_matches_minus_114_dbm() {
        let n0 = default_noise_power_w();
        assert!((n0 - 3.981_071_705_534_97e-15).abs() / n0 < 1e-12);
    }

    #[test]
    fn reference_config_has_three_subchannels_per_rb() {
        let c = SystemConfig::default();
        c.validate().unwrap();
        assert_eq!(c.subchannels_per_rb(), 3);
        assert_eq!(c.rb_subchannels(29), 87..90);
    }

    #[test]
    fn invalid_configs_name_the_invariant() {
        let mut c = small_config();
        c.num_subchannels = 2;
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("subchannels_per_rb"), "{err}");

        let mut c = small_config();
        c.cr_set.swap(0, 1);
        let err = generate_scenario(&c).unwrap_err().to_string();
        assert!(err.contains("strictly increasing"), "{err}");

        let mut c = small_config();
        c.symbol_duration_s = 0.0;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("symbol_duration_s"));
    }

    #[test]
    fn generation_is_deterministic() {
        let c = small_config();
        assert_eq!(
            generate_scenario(&c).unwrap(),
            generate_scenario(&c).unwrap()
        );
        let mut other = c.clone();
        other.rng_seed = 12;
        assert_ne!(
            generate_scenario(&c).unwrap(),
            generate_scenario(&other).unwrap()
        );
    }

    #[test]
    fn adding_users_keeps_earlier_draws() {
        let c = small_config();
        let mut bigger = c.clone();
        bigger.num_users = 9;
        let a = generate_scenario(&c).unwrap();
        let b = generate_scenario(&bigger).unwrap();
        assert_eq!(a.users[..], b.users[..4]);
    }

    #[test]
    fn reference_drop_respects_ranges() {
        let s = generate_scenario(&SystemConfig::default()).unwrap();
        assert_eq!(s.users.len(), 30);
        for u in &s.users {
            assert_eq!(u.channel_gain_sq.len(), 100);
            assert!(u.channel_gain_sq.iter().all(|g| g.is_finite() && *g > 0.0));
            assert!((4.0e-3..=6.0e-3).contains(&u.delay_bound_s));
            assert!((20.0..=25.0).contains(&u.psnr_bound_db));
            assert!(u.distance_m >= MIN_DISTANCE_M && u.distance_m <= 500.0);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = generate_scenario(&small_config()).unwrap();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn missing_gain_row_names_the_user() {
        let s = generate_scenario(&small_config()).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        doc["users"][2]
            .as_object_mut()
            .unwrap()
            .remove("channel_gain_sq");
        let err = Scenario::from_json(&doc.to_string()).unwrap_err();
        match err {
            ScenarioError::Parse { path, message } => {
                assert_eq!(path, "users[2].channel_gain_sq");
                assert!(message.contains("user 2"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_delay_bound_is_rejected() {
        let s = generate_scenario(&small_config()).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        doc["users"][1]["delay_bound_s"] = serde_json::json!(0.0);
        let err = Scenario::from_json(&doc.to_string()).unwrap_err();
        assert!(
            matches!(&err, ScenarioError::Invariant { path, .. } if path == "users[1].delay_bound_s"),
            "{err}"
        );
    }
}
