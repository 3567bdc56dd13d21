//! Benchmark allocators and the fixed-compression-ratio ablation.
//!
//! All of them read the same [`PowerMatrix`] as the optimal method (or one
//! built with a pinned ratio), so differences come only from pairing and
//! admission.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assign::{solve_hungarian, Backend};
use crate::capacity::{solve_capacity_with_matrix, AllocError, AllocationResult, UserAllocation};
use crate::power_min::{build_power_matrix, realized_snr_db, CrPolicy, P2Options, PowerMatrix};
use crate::psnr_model::PsnrModel;
use crate::ratio::CompressionRatio;
use crate::scenario::Scenario;

/// Allocator selectable from configuration and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Optimal,
    Hungarian,
    Random,
    Uniform,
    FixedCr(CompressionRatio),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Optimal => f.write_str("optimal"),
            Method::Hungarian => f.write_str("hungarian"),
            Method::Random => f.write_str("random"),
            Method::Uniform => f.write_str("uniform"),
            Method::FixedCr(cr) => write!(f, "fixed-cr:{cr}"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error(
    "unknown method `{0}` (expected optimal, hungarian, random, uniform or fixed-cr:<num>/<den>)"
)]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "optimal" => Ok(Method::Optimal),
            "hungarian" => Ok(Method::Hungarian),
            "random" => Ok(Method::Random),
            "uniform" => Ok(Method::Uniform),
            other => other
                .strip_prefix("fixed-cr:")
                .and_then(|r| r.parse().ok())
                .map(Method::FixedCr)
                .ok_or_else(|| UnknownMethod(other.to_string())),
        }
    }
}

impl serde::Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the uniform benchmark splits the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformShare {
    /// `P / K`
    #[default]
    PerUser,
    /// `P / M`
    PerRb,
}

/// Uniformly random injective user -> RB map. With more users than RBs a
/// random subset of `M` users is paired and the rest get nothing.
pub fn random_injection(num_users: usize, num_rbs: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if num_users <= num_rbs {
        let mut rbs: Vec<usize> = (0..num_rbs).collect();
        rbs.shuffle(&mut rng);
        (0..num_users).map(|k| (k, rbs[k])).collect()
    } else {
        let mut users: Vec<usize> = (0..num_users).collect();
        users.shuffle(&mut rng);
        let mut pairs: Vec<(usize, usize)> = (0..num_rbs).map(|m| (users[m], m)).collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Cheapest-first admission: take pairs in ascending power (ties by user)
/// until the next one would exceed the budget. Infeasible pairs are skipped.
fn admit_greedily(
    matrix: &PowerMatrix,
    pairs: &[(usize, usize)],
    budget_w: f64,
) -> Vec<(usize, usize)> {
    let mut priced: Vec<(f64, usize, usize)> = pairs
        .iter()
        .filter_map(|&(k, m)| matrix.get(k, m).power_w().map(|p| (p, k, m)))
        .collect();
    priced.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut spent = 0.0;
    let mut admitted = Vec::new();
    for (p, k, m) in priced {
        if spent + p > budget_w {
            break;
        }
        spent += p;
        admitted.push((k, m));
    }
    admitted
}

/// Full Hungarian assignment, then cheapest-first admission.
pub fn hungarian_greedy_on(
    scenario: &Scenario,
    model: &PsnrModel,
    matrix: &PowerMatrix,
    budget_w: f64,
) -> Result<AllocationResult, AllocError> {
    let full = solve_hungarian(&matrix.cost_matrix())?;
    let admitted = admit_greedily(matrix, full.assignment.pairs(), budget_w);
    Ok(AllocationResult::from_pairs(
        Method::Hungarian.to_string(),
        scenario,
        model,
        matrix,
        &admitted,
    ))
}

pub fn hungarian_greedy(
    scenario: &Scenario,
    model: &PsnrModel,
) -> Result<AllocationResult, AllocError> {
    let matrix = build_power_matrix(scenario, model, &P2Options::default())?;
    hungarian_greedy_on(scenario, model, &matrix, scenario.config.bs_power_budget_w)
}

/// Random pairing with per-pair minimum powers and cheapest-first admission.
pub fn random_pairing_on(
    scenario: &Scenario,
    model: &PsnrModel,
    matrix: &PowerMatrix,
    budget_w: f64,
    seed: u64,
) -> AllocationResult {
    let pairs = random_injection(matrix.num_users(), matrix.num_rbs(), seed);
    let admitted = admit_greedily(matrix, &pairs, budget_w);
    AllocationResult::from_pairs(
        Method::Random.to_string(),
        scenario,
        model,
        matrix,
        &admitted,
    )
}

pub fn random_pairing(
    scenario: &Scenario,
    model: &PsnrModel,
    seed: u64,
) -> Result<AllocationResult, AllocError> {
    let matrix = build_power_matrix(scenario, model, &P2Options::default())?;
    Ok(random_pairing_on(
        scenario,
        model,
        &matrix,
        scenario.config.bs_power_budget_w,
        seed,
    ))
}

/// Random pairing where every paired user gets an equal budget share; a
/// user is served iff its share covers the minimum power of its pair.
pub fn uniform_power_on(
    scenario: &Scenario,
    model: &PsnrModel,
    matrix: &PowerMatrix,
    budget_w: f64,
    seed: u64,
    share: UniformShare,
) -> AllocationResult {
    let method = Method::Uniform.to_string();
    let parts = match share {
        UniformShare::PerUser => matrix.num_users(),
        UniformShare::PerRb => matrix.num_rbs(),
    };
    if parts == 0 {
        return AllocationResult::empty(method, matrix.num_users());
    }
    let share_w = budget_w / parts as f64;
    let config = &scenario.config;
    let allocations = random_injection(matrix.num_users(), matrix.num_rbs(), seed)
        .into_iter()
        .filter_map(|(k, m)| {
            let pair = matrix.get(k, m);
            let needed = pair.power_w()?;
            (share_w >= needed).then(|| UserAllocation {
                user: k,
                rb: m,
                cr: pair.cr.expect("feasible pair has a ratio"),
                snr_db: realized_snr_db(
                    scenario.users[k].rb_gains(config, m),
                    share_w,
                    config.noise_power_per_subchannel_w,
                ),
                power_w: share_w,
            })
        })
        .collect();
    AllocationResult::from_allocations(method, scenario, model, allocations)
}

pub fn uniform_power(
    scenario: &Scenario,
    model: &PsnrModel,
    seed: u64,
    share: UniformShare,
) -> Result<AllocationResult, AllocError> {
    let matrix = build_power_matrix(scenario, model, &P2Options::default())?;
    Ok(uniform_power_on(
        scenario,
        model,
        &matrix,
        scenario.config.bs_power_budget_w,
        seed,
        share,
    ))
}

/// Optimal pairing with the compression ratio pinned to `cr` for everyone.
pub fn fixed_cr(
    scenario: &Scenario,
    model: &PsnrModel,
    cr: CompressionRatio,
    backend: Backend,
) -> Result<AllocationResult, AllocError> {
    let opts = P2Options {
        policy: CrPolicy::Fixed(cr),
        ..P2Options::default()
    };
    let matrix = build_power_matrix(scenario, model, &opts)?;
    let (result, _) = solve_capacity_with_matrix(
        scenario,
        model,
        &matrix,
        scenario.config.bs_power_budget_w,
        backend,
        &Method::FixedCr(cr).to_string(),
    )?;
    Ok(result)
}
