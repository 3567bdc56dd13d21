#![allow(dead_code)]

use std::path::PathBuf;

use jscc_alloc::assign::CostMatrix;
use jscc_alloc::{CompressionRatio, PsnrModel, Scenario, SystemConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Small config: `k` users, `m` RBs of three sub-channels, a random subset
/// of `max_ratios` ratios and a log-uniform budget around the per-user cost.
pub fn tiny_config(rng: &mut ChaCha8Rng, k: usize, m: usize, max_ratios: usize) -> SystemConfig {
    let mut crs = CompressionRatio::default_set();
    crs.shuffle(rng);
    crs.truncate(rng.random_range(1..=max_ratios));
    crs.sort();
    SystemConfig {
        num_users: k,
        num_rbs: m,
        num_subchannels: 3 * m,
        cr_set: crs,
        bs_power_budget_w: 10f64.powf(rng.random_range(-4.0..-0.5)),
        rng_seed: rng.random(),
        ..SystemConfig::default()
    }
}

pub fn tiny_scenario(
    rng: &mut ChaCha8Rng,
    max_users: usize,
    max_rbs: usize,
    max_ratios: usize,
) -> Scenario {
    let k = rng.random_range(1..=max_users);
    let m = rng.random_range(1..=max_rbs);
    let cfg = tiny_config(rng, k, m, max_ratios);
    jscc_alloc::generate_scenario(&cfg).unwrap()
}

/// Random cost matrix with about `forbidden` of its entries excluded.
pub fn random_costs(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    forbidden: f64,
    integral: bool,
) -> CostMatrix {
    CostMatrix::from_fn(rows, cols, |_, _| {
        if rng.random_bool(forbidden) {
            None
        } else if integral {
            Some(f64::from(rng.random_range(0u32..50)))
        } else {
            Some(10f64.powf(rng.random_range(-4.0..0.0)))
        }
    })
}

/// Cheapest matching of exactly `j` pairs by enumerating every partial
/// injection.
pub fn brute_force_assignment(costs: &CostMatrix, j: usize) -> Option<f64> {
    fn go(
        costs: &CostMatrix,
        row: usize,
        left: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut Option<f64>,
    ) {
        if left == 0 {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        if costs.rows() - row < left {
            return;
        }
        go(costs, row + 1, left, used, acc, best);
        for col in 0..costs.cols() {
            if used[col] {
                continue;
            }
            if let Some(c) = costs.get(row, col) {
                used[col] = true;
                go(costs, row + 1, left - 1, used, acc + c, best);
                used[col] = false;
            }
        }
    }
    let mut best = None;
    go(costs, 0, j, &mut vec![false; costs.cols()], 0.0, &mut best);
    best
}

pub fn synthetic() -> PsnrModel {
    PsnrModel::synthetic()
}
