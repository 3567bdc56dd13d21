//! Minimum transmit power for every user/RB pair.
//!
//! For a fixed pair the delay bound caps the compression ratio, and because
//! the PSNR surrogate is nondecreasing in the ratio, the largest admissible
//! ratio needs the least SNR. The SNR floor then comes from bisection on the
//! model, and the power from equalizing that SNR on each sub-channel of the
//! block.

use std::fmt;

use rayon::prelude::*;

use crate::assign::CostMatrix;
use crate::psnr_model::{MinSnr, ModelError, PsnrModel, DEFAULT_SNR_TOL_DB};
use crate::ratio::CompressionRatio;
use crate::scenario::{Scenario, SystemConfig, User};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Infeasibility {
    /// No admissible compression ratio meets the delay bound.
    Latency,
    /// The PSNR floor is above what the model delivers at any SNR.
    Psnr,
    /// Some sub-channel of the block has zero gain.
    ZeroGain,
}

impl Infeasibility {
    pub fn code(self) -> &'static str {
        match self {
            Infeasibility::Latency => "latency-infeasible",
            Infeasibility::Psnr => "psnr-infeasible",
            Infeasibility::ZeroGain => "zero-gain",
        }
    }
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// How the per-pair solver picks the compression ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrPolicy {
    /// Largest ratio in the candidate set that meets the delay bound.
    #[default]
    Adaptive,
    /// Always this ratio; pairs where it breaks the delay bound are infeasible.
    Fixed(CompressionRatio),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2Options {
    pub policy: CrPolicy,
    pub snr_tol_db: f64,
}

impl Default for P2Options {
    fn default() -> Self {
        Self {
            policy: CrPolicy::Adaptive,
            snr_tol_db: DEFAULT_SNR_TOL_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairPower {
    Feasible {
        total_w: f64,
        per_subchannel_w: Vec<f64>,
    },
    Infeasible(Infeasibility),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSolution {
    pub user: usize,
    pub rb: usize,
    pub cr: Option<CompressionRatio>,
    pub snr_db: Option<f64>,
    pub power: PairPower,
}

impl PairSolution {
    pub fn power_w(&self) -> Option<f64> {
        match self.power {
            PairPower::Feasible { total_w, .. } => Some(total_w),
            PairPower::Infeasible(_) => None,
        }
    }

    pub fn infeasibility(&self) -> Option<Infeasibility> {
        match self.power {
            PairPower::Feasible { .. } => None,
            PairPower::Infeasible(r) => Some(r),
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.power, PairPower::Feasible { .. })
    }
}

/// Time to push one source of `source_symbols` symbols through one RB at
/// compression ratio `cr`: `D * cr / S0` OFDM symbols of `T0` each.
pub fn transmission_delay(cr: f64, config: &SystemConfig) -> f64 {
    f64::from(config.source_symbols) * cr / config.subchannels_per_rb() as f64
        * config.symbol_duration_s
}

/// Largest compression ratio the delay bound allows, `T_k S0 / (T0 D)`.
pub fn max_compression_ratio(user: &User, config: &SystemConfig) -> f64 {
    user.delay_bound_s * config.subchannels_per_rb() as f64
        / (config.symbol_duration_s * f64::from(config.source_symbols))
}

/// Largest candidate ratio whose transmission fits in the user's delay
/// bound, or `None` when even the smallest one does not.
pub fn max_feasible_cr(user: &User, config: &SystemConfig) -> Option<CompressionRatio> {
    config
        .cr_set
        .iter()
        .rev()
        .copied()
        .find(|cr| transmission_delay(cr.value(), config) <= user.delay_bound_s)
}

/// Per-sub-channel power that equalizes the received SNR to `snr_db` on
/// every sub-channel with the given gains: `N0 / |h|^2 * 10^(snr/10)`.
///
/// Returns `None` if any gain is zero.
pub fn equalizing_powers(gains: &[f64], snr_db: f64, noise_w: f64) -> Option<Vec<f64>> {
    if gains.iter().any(|&g| !(g > 0.0)) {
        return None;
    }
    let snr_lin = 10f64.powf(snr_db / 10.0);
    Some(gains.iter().map(|&g| noise_w / g * snr_lin).collect())
}

/// Total and per-sub-channel power putting user `user` at `snr_db` on
/// resource block `rb`.
pub fn rb_power_for_snr(
    user: &User,
    rb: usize,
    snr_db: f64,
    config: &SystemConfig,
) -> Result<(f64, Vec<f64>), Infeasibility> {
    let per_sub = equalizing_powers(
        user.rb_gains(config, rb),
        snr_db,
        config.noise_power_per_subchannel_w,
    )
    .ok_or(Infeasibility::ZeroGain)?;
    Ok((per_sub.iter().sum(), per_sub))
}

/// Received SNR (dB) when `power_w` is split to equalize SNR over `gains`.
pub fn realized_snr_db(gains: &[f64], power_w: f64, noise_w: f64) -> f64 {
    let inverse_gain: f64 = gains.iter().map(|&g| noise_w / g).sum();
    10.0 * (power_w / inverse_gain).log10()
}

/// Compression ratio and SNR floor for one user; independent of the RB.
#[derive(Debug, Clone, Copy, PartialEq)]
struct UserTarget {
    cr: Option<CompressionRatio>,
    snr: Result<f64, Infeasibility>,
}

fn user_target(
    user: &User,
    model: &PsnrModel,
    config: &SystemConfig,
    opts: &P2Options,
) -> Result<UserTarget, ModelError> {
    let cr = match opts.policy {
        CrPolicy::Adaptive => max_feasible_cr(user, config),
        CrPolicy::Fixed(cr) => {
            Some(cr).filter(|cr| transmission_delay(cr.value(), config) <= user.delay_bound_s)
        }
    };
    let Some(cr) = cr else {
        return Ok(UserTarget {
            cr: None,
            snr: Err(Infeasibility::Latency),
        });
    };
    let snr = match model.min_snr_for_psnr(cr.value(), user.psnr_bound_db, opts.snr_tol_db)? {
        MinSnr::Found { snr_db, .. } => Ok(snr_db),
        MinSnr::Infeasible => Err(Infeasibility::Psnr),
    };
    Ok(UserTarget { cr: Some(cr), snr })
}

fn pair_from_target(
    user: &User,
    rb: usize,
    target: UserTarget,
    config: &SystemConfig,
) -> PairSolution {
    let (snr_db, power) = match target.snr {
        Err(reason) => (None, PairPower::Infeasible(reason)),
        Ok(snr) => match rb_power_for_snr(user, rb, snr, config) {
            Ok((total_w, per_subchannel_w)) => (
                Some(snr),
                PairPower::Feasible {
                    total_w,
                    per_subchannel_w,
                },
            ),
            Err(reason) => (Some(snr), PairPower::Infeasible(reason)),
        },
    };
    PairSolution {
        user: user.id,
        rb,
        cr: target.cr,
        snr_db,
        power,
    }
}

/// Every candidate ratio (and a fixed ratio, if any) must be inside the
/// model's CR grid.
pub fn check_model_coverage(
    config: &SystemConfig,
    model: &PsnrModel,
    policy: CrPolicy,
) -> Result<(), ModelError> {
    let extra = match policy {
        CrPolicy::Fixed(cr) => Some(cr),
        CrPolicy::Adaptive => None,
    };
    for cr in config.cr_set.iter().chain(extra.iter()) {
        if !model.covers_cr(cr.value()) {
            let grid = model.cr_grid();
            return Err(ModelError::Domain {
                cr: cr.value(),
                lo: grid[0],
                hi: *grid.last().unwrap(),
            });
        }
    }
    Ok(())
}

/// Minimum power for user `user` on resource block `rb` subject to its delay
/// bound and PSNR floor.
pub fn solve_p2(
    user: &User,
    rb: usize,
    model: &PsnrModel,
    config: &SystemConfig,
    opts: &P2Options,
) -> Result<PairSolution, ModelError> {
    let target = user_target(user, model, config, opts)?;
    Ok(pair_from_target(user, rb, target, config))
}

/// `K x M` grid of per-pair solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix {
    num_users: usize,
    num_rbs: usize,
    entries: Vec<PairSolution>,
}

impl PowerMatrix {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    pub fn get(&self, user: usize, rb: usize) -> &PairSolution {
        &self.entries[user * self.num_rbs + rb]
    }

    pub fn entries(&self) -> &[PairSolution] {
        &self.entries
    }

    pub fn row(&self, user: usize) -> &[PairSolution] {
        &self.entries[user * self.num_rbs..(user + 1) * self.num_rbs]
    }

    pub fn cost_matrix(&self) -> CostMatrix {
        CostMatrix::from_fn(self.num_users, self.num_rbs, |k, m| {
            self.get(k, m).power_w()
        })
    }

    /// Debug dump: `user,rb,cr,snr_db,power_w,status`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,rb,cr,snr_db,power_w,status\n");
        for e in &self.entries {
            let cr = e.cr.map(|c| c.to_string()).unwrap_or_default();
            let snr = e.snr_db.map(|s| s.to_string()).unwrap_or_default();
            let power = e.power_w().map(|p| p.to_string()).unwrap_or_default();
            let status = e.infeasibility().map_or("ok", Infeasibility::code);
            out.push_str(&format!(
                "{},{},{cr},{snr},{power},{status}\n",
                e.user, e.rb
            ));
        }
        out
    }
}

/// Solves the per-pair problem for all `K * M` pairs. Users are processed in parallel; the
/// result does not depend on scheduling.
pub fn build_power_matrix(
    scenario: &Scenario,
    model: &PsnrModel,
    opts: &P2Options,
) -> Result<PowerMatrix, ModelError> {
    let config = &scenario.config;
    check_model_coverage(config, model, opts.policy)?;
    let rows: Vec<Vec<PairSolution>> = scenario
        .users
        .par_iter()
        .map(|user| {
            let target = user_target(user, model, config, opts)?;
            Ok((0..config.num_rbs)
                .map(|rb| pair_from_target(user, rb, target, config))
                .collect())
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(PowerMatrix {
        num_users: scenario.users.len(),
        num_rbs: config.num_rbs,
        entries: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_noise_power_w, generate_scenario};

    fn user_with(delay_bound_s: f64, psnr_bound_db: f64, gains: Vec<f64>) -> User {
        User {
            id: 0,
            distance_m: 100.0,
            delay_bound_s,
            psnr_bound_db,
            channel_gain_sq: gains,
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn delay_of_largest_ratio() {
        let c = SystemConfig::default();
        // 3072 * (1/6) / 3 = 512/3 symbols of 33.3 us
        let expected = 512.0 / 3.0 * 33.3e-6;
        assert!(rel_err(transmission_delay(1.0 / 6.0, &c), expected) < 1e-12);
        assert!(rel_err(transmission_delay(1.0 / 6.0, &c), 5.683_2e-3) < 1e-4);
    }

    #[test]
    fn delay_is_linear_in_ratio() {
        let c = SystemConfig::default();
        let a = transmission_delay(0.05, &c);
        assert_eq!(transmission_delay(0.1, &c), 2.0 * a);
    }

    #[test]
    fn max_ratio_for_five_ms() {
        let c = SystemConfig::default();
        let u = user_with(5e-3, 22.0, vec![1e-10; 100]);
        let o_max = max_compression_ratio(&u, &c);
        let expected = 5e-3 * 3.0 / (33.3e-6 * 3072.0);
        assert!(rel_err(o_max, expected) < 1e-12);
        assert!((o_max - 0.14663).abs() < 1e-5);
        assert_eq!(max_feasible_cr(&u, &c).unwrap().to_string(), "7/48");
    }

    #[test]
    fn max_ratio_saturates_and_empties() {
        let c = SystemConfig::default();
        let relaxed = user_with(1.0, 22.0, vec![1e-10; 100]);
        assert_eq!(max_feasible_cr(&relaxed, &c).unwrap().to_string(), "1/6");
        // 1/48 needs 64/3 * 33.3 us ~ 0.71 ms
        let tight = user_with(0.7e-3, 22.0, vec![1e-10; 100]);
        assert!(max_compression_ratio(&tight, &c) < 1.0 / 48.0);
        assert_eq!(max_feasible_cr(&tight, &c), None);
    }

    #[test]
    fn chosen_ratio_always_meets_the_delay_bound() {
        let s = generate_scenario(&SystemConfig::default()).unwrap();
        for u in &s.users {
            let cr = max_feasible_cr(u, &s.config).unwrap();
            assert!(transmission_delay(cr.value(), &s.config) <= u.delay_bound_s);
            assert!(cr.value() <= max_compression_ratio(u, &s.config));
        }
    }

    #[test]
    fn power_formula_hand_value() {
        let c = SystemConfig {
            noise_power_per_subchannel_w: 3.981e-15,
            ..SystemConfig::default()
        };
        let u = user_with(5e-3, 22.0, vec![1e-10; 100]);
        let (total, per) = rb_power_for_snr(&u, 0, 10.0, &c).unwrap();
        assert_eq!(per.len(), 3);
        for p in &per {
            assert!(rel_err(*p, 3.981e-4) < 1e-12);
        }
        assert!(rel_err(total, 3.0 * 3.981e-4) < 1e-12);
    }

    #[test]
    fn power_vanishes_at_very_low_snr() {
        let u = user_with(5e-3, 22.0, vec![1e-10; 100]);
        let (total, _) = rb_power_for_snr(&u, 0, -300.0, &SystemConfig::default()).unwrap();
        assert!(total < 1e-30);
    }

    #[test]
    fn doubling_a_gain_halves_its_power_only() {
        let c = SystemConfig::default();
        let mut gains = vec![2e-11; 100];
        let u = user_with(5e-3, 22.0, gains.clone());
        gains[4] *= 2.0;
        let v = user_with(5e-3, 22.0, gains);
        let (_, a) = rb_power_for_snr(&u, 1, 7.0, &c).unwrap();
        let (_, b) = rb_power_for_snr(&v, 1, 7.0, &c).unwrap();
        assert_eq!(a[0], b[0]);
        assert!(rel_err(b[1], a[1] / 2.0) < 1e-15);
        assert_eq!(a[2], b[2]);
    }

    #[test]
    fn zero_gain_is_reported() {
        let mut gains = vec![1e-10; 100];
        gains[3] = 0.0;
        let u = user_with(5e-3, 22.0, gains);
        let c = SystemConfig::default();
        assert_eq!(
            rb_power_for_snr(&u, 1, 5.0, &c),
            Err(Infeasibility::ZeroGain)
        );
        assert!(rb_power_for_snr(&u, 0, 5.0, &c).is_ok());
    }

    #[test]
    fn realized_snr_inverts_the_power_rule() {
        let gains = [3e-11, 7e-12, 1e-10];
        let n0 = default_noise_power_w();
        let per = equalizing_powers(&gains, 8.5, n0).unwrap();
        let snr = realized_snr_db(&gains, per.iter().sum(), n0);
        assert!((snr - 8.5).abs() < 1e-12);
    }

    #[test]
    fn p2_propagates_reasons() {
        let m = PsnrModel::synthetic();
        let c = SystemConfig::default();
        let late = user_with(0.5e-3, 21.0, vec![1e-10; 100]);
        let s = solve_p2(&late, 0, &m, &c, &P2Options::default()).unwrap();
        assert_eq!(s.infeasibility(), Some(Infeasibility::Latency));
        assert_eq!(s.cr, None);

        let greedy = user_with(5e-3, 40.0, vec![1e-10; 100]);
        let s = solve_p2(&greedy, 0, &m, &c, &P2Options::default()).unwrap();
        assert_eq!(s.infeasibility(), Some(Infeasibility::Psnr));
        assert_eq!(s.cr.unwrap().to_string(), "7/48");
    }

    #[test]
    fn p2_feasible_pair_meets_both_constraints() {
        let m = PsnrModel::synthetic();
        let c = SystemConfig::default();
        let u = user_with(5e-3, 23.0, vec![1e-11; 100]);
        let s = solve_p2(&u, 2, &m, &c, &P2Options::default()).unwrap();
        let cr = s.cr.unwrap();
        let PairPower::Feasible {
            total_w,
            per_subchannel_w,
        } = &s.power
        else {
            panic!("expected feasible pair");
        };
        assert!((total_w - per_subchannel_w.iter().sum::<f64>()).abs() <= 1e-18);
        assert!(per_subchannel_w.iter().all(|p| *p > 0.0));
        assert!(transmission_delay(cr.value(), &c) <= u.delay_bound_s);
        assert!(m.evaluate(cr.value(), s.snr_db.unwrap()).unwrap() >= u.psnr_bound_db);
    }

    #[test]
    fn fixed_ratio_above_delay_cap_is_latency_infeasible() {
        let m = PsnrModel::synthetic();
        let c = SystemConfig::default();
        let u = user_with(4.2e-3, 21.0, vec![1e-10; 100]);
        let opts = P2Options {
            policy: CrPolicy::Fixed("1/6".parse().unwrap()),
            ..P2Options::default()
        };
        let s = solve_p2(&u, 0, &m, &c, &opts).unwrap();
        assert_eq!(s.infeasibility(), Some(Infeasibility::Latency));
    }

    #[test]
    fn smaller_ratio_never_needs_less_power() {
        let m = PsnrModel::synthetic();
        let c = SystemConfig::default();
        let s = generate_scenario(&SystemConfig {
            num_users: 10,
            rng_seed: 3,
            ..SystemConfig::default()
        })
        .unwrap();
        for u in &s.users {
            let adaptive = solve_p2(u, 0, &m, &c, &P2Options::default()).unwrap();
            let Some(best) = adaptive.power_w() else {
                continue;
            };
            for &cr in c.cr_set.iter().filter(|cr| **cr < adaptive.cr.unwrap()) {
                let opts = P2Options {
                    policy: CrPolicy::Fixed(cr),
                    ..P2Options::default()
                };
                if let Some(p) = solve_p2(u, 0, &m, &c, &opts).unwrap().power_w() {
                    assert!(p >= best, "cr {cr}: {p} < {best}");
                }
            }
        }
    }

    #[test]
    fn empty_scenario_gives_empty_matrix() {
        let c = SystemConfig {
            num_users: 0,
            ..SystemConfig::default()
        };
        let s = generate_scenario(&c).unwrap();
        let pm = build_power_matrix(&s, &PsnrModel::synthetic(), &P2Options::default()).unwrap();
        assert_eq!(pm.num_users(), 0);
        assert!(pm.entries().is_empty());
        assert_eq!(pm.to_csv(), "user,rb,cr,snr_db,power_w,status\n");
    }

    #[test]
    fn matrix_matches_pairwise_solves() {
        let c = SystemConfig {
            num_users: 5,
            num_rbs: 4,
            num_subchannels: 12,
            rng_seed: 8,
            ..SystemConfig::default()
        };
        let s = generate_scenario(&c).unwrap();
        let m = PsnrModel::synthetic();
        let opts = P2Options::default();
        let pm = build_power_matrix(&s, &m, &opts).unwrap();
        for u in &s.users {
            for rb in 0..c.num_rbs {
                assert_eq!(pm.get(u.id, rb), &solve_p2(u, rb, &m, &c, &opts).unwrap());
            }
        }
        let csv = pm.to_csv();
        assert_eq!(csv.lines().count(), 1 + 20);
    }

    #[test]
    fn uncovered_ratio_is_a_model_error() {
        let model =
            PsnrModel::new(vec![0.1, 0.2], vec![0.0, 20.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = generate_scenario(&SystemConfig {
            num_users: 2,
            ..SystemConfig::default()
        })
        .unwrap();
        assert!(matches!(
            build_power_matrix(&s, &model, &P2Options::default()),
            Err(ModelError::Domain { .. })
        ));
    }
}
