//! Maximizing the number of served users under the power budget.
//!
//! With per-pair minimum powers fixed, serving `J` users costs at least
//! `P*_J`, the cheapest `J`-assignment. `P*_J` is nondecreasing in `J`, so
//! the largest affordable `J` is found by bisection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{self, max_matching_size, Assignment, Backend, SolverError};
use crate::power_min::{
    build_power_matrix, equalizing_powers, realized_snr_db, transmission_delay, P2Options,
    PowerMatrix,
};
use crate::psnr_model::{MinSnr, ModelError, PsnrModel, DEFAULT_SNR_TOL_DB};
use crate::ratio::CompressionRatio;
use crate::scenario::{Scenario, SystemConfig, User};

/// Slack (dB) allowed when re-checking a PSNR floor from a realized power;
/// absorbs the round trip SNR -> watts -> SNR.
pub const PSNR_CHECK_SLACK_DB: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

/// Resources granted to one served user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAllocation {
    pub user: usize,
    pub rb: usize,
    pub cr: CompressionRatio,
    pub snr_db: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub method: String,
    pub supported: usize,
    pub assignment: Assignment,
    /// One entry per pair in `assignment`, ordered by user.
    pub allocations: Vec<UserAllocation>,
    pub total_power_w: f64,
    /// Per-user utility, indexed by user id.
    pub utilities: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct AllocationDoc {
    method: String,
    #[serde(rename = "J_star")]
    j_star: usize,
    total_power_w: f64,
    pairs: Vec<UserAllocation>,
}

impl AllocationResult {
    pub fn empty(method: impl Into<String>, num_users: usize) -> Self {
        Self {
            method: method.into(),
            supported: 0,
            assignment: Assignment::default(),
            allocations: Vec::new(),
            total_power_w: 0.0,
            utilities: vec![false; num_users],
        }
    }

    /// Builds a result from explicit grants, scoring every user with
    /// [`evaluate_utility`].
    pub fn from_allocations(
        method: impl Into<String>,
        scenario: &Scenario,
        model: &PsnrModel,
        mut allocations: Vec<UserAllocation>,
    ) -> Self {
        allocations.sort_by_key(|a| a.user);
        let mut utilities = vec![false; scenario.users.len()];
        for a in &allocations {
            utilities[a.user] =
                evaluate_utility(&scenario.users[a.user], Some(a), model, &scenario.config);
        }
        let assignment = Assignment::new(allocations.iter().map(|a| (a.user, a.rb)).collect());
        Self {
            method: method.into(),
            supported: utilities.iter().filter(|u| **u).count(),
            assignment,
            total_power_w: allocations.iter().map(|a| a.power_w).sum(),
            allocations,
            utilities,
        }
    }

    /// Grants every pair its minimum power from the matrix.
    pub fn from_pairs(
        method: impl Into<String>,
        scenario: &Scenario,
        model: &PsnrModel,
        matrix: &PowerMatrix,
        pairs: &[(usize, usize)],
    ) -> Self {
        let allocations = pairs
            .iter()
            .map(|&(k, m)| {
                let p = matrix.get(k, m);
                UserAllocation {
                    user: k,
                    rb: m,
                    cr: p.cr.expect("feasible pair has a ratio"),
                    snr_db: p.snr_db.expect("feasible pair has an SNR"),
                    power_w: p.power_w().expect("feasible pair has a power"),
                }
            })
            .collect();
        Self::from_allocations(method, scenario, model, allocations)
    }

    pub fn to_json(&self) -> String {
        let doc = AllocationDoc {
            method: self.method.clone(),
            j_star: self.supported,
            total_power_w: self.total_power_w,
            pairs: self.allocations.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("allocation serializes")
    }
}

/// Binary utility: 1 iff the granted resources meet both the delay bound and
/// the PSNR floor. Delay and SNR are recomputed from the grant.
pub fn evaluate_utility(
    user: &User,
    alloc: Option<&UserAllocation>,
    model: &PsnrModel,
    config: &SystemConfig,
) -> bool {
    let Some(a) = alloc else { return false };
    if a.rb >= config.num_rbs || !(a.power_w > 0.0) {
        return false;
    }
    let gains = user.rb_gains(config, a.rb);
    if gains.iter().any(|g| !(*g > 0.0)) {
        return false;
    }
    let delay_ok = transmission_delay(a.cr.value(), config) <= user.delay_bound_s;
    let snr = realized_snr_db(gains, a.power_w, config.noise_power_per_subchannel_w);
    let psnr_ok = model
        .evaluate(a.cr.value(), snr)
        .is_ok_and(|q| q >= user.psnr_bound_db - PSNR_CHECK_SLACK_DB);
    delay_ok && psnr_ok
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CapacityOptions {
    pub backend: Backend,
    pub p2: P2Options,
}

/// Fixed-cardinality solves issued by one capacity search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BisectionTrace {
    /// Upper end of the search: `min(K, maximum matching size)`.
    pub j_cap: usize,
    /// `(J, P*_J)` in call order.
    pub probes: Vec<(usize, f64)>,
}

impl BisectionTrace {
    pub fn inner_solves(&self) -> usize {
        self.probes.len()
    }
}

/// Largest `J` with `P*_J <= budget`, with the minimum-power assignment that
/// achieves it.
pub fn max_supported(
    matrix: &PowerMatrix,
    budget_w: f64,
    backend: Backend,
) -> Result<(Assignment, BisectionTrace), SolverError> {
    let costs = matrix.cost_matrix();
    // P*_J is infinite past the largest matching, so start the search there
    let j_cap = matrix.num_users().min(max_matching_size(&costs));
    let mut trace = BisectionTrace {
        j_cap,
        probes: Vec::new(),
    };
    if j_cap == 0 {
        return Ok((Assignment::default(), trace));
    }
    let probe = |j: usize, trace: &mut BisectionTrace| {
        let (a, cost) = assign::solve_k_assignment(&costs, j, backend)?;
        trace.probes.push((j, cost));
        Ok::<_, SolverError>((a, cost))
    };

    let (top, top_cost) = probe(j_cap, &mut trace)?;
    if budget_w >= top_cost {
        return Ok((top, trace));
    }
    let (mut lo, mut hi) = (0, j_cap);
    let mut best = Assignment::default();
    while hi - lo > 1 {
        let j = (lo + hi) / 2;
        let (a, cost) = probe(j, &mut trace)?;
        if cost > budget_w {
            hi = j;
        } else {
            lo = j;
            best = a;
        }
    }
    Ok((best, trace))
}

/// Capacity maximization on a precomputed power matrix.
pub fn solve_capacity_with_matrix(
    scenario: &Scenario,
    model: &PsnrModel,
    matrix: &PowerMatrix,
    budget_w: f64,
    backend: Backend,
    method: &str,
) -> Result<(AllocationResult, BisectionTrace), AllocError> {
    let (assignment, trace) = max_supported(matrix, budget_w, backend)?;
    let result = AllocationResult::from_pairs(method, scenario, model, matrix, assignment.pairs());
    Ok((result, trace))
}

/// Builds the power matrix and runs the bisection under the scenario's own
/// budget.
pub fn solve_capacity(
    scenario: &Scenario,
    model: &PsnrModel,
    opts: &CapacityOptions,
) -> Result<(AllocationResult, BisectionTrace), AllocError> {
    let matrix = build_power_matrix(scenario, model, &opts.p2)?;
    solve_capacity_with_matrix(
        scenario,
        model,
        &matrix,
        scenario.config.bs_power_budget_w,
        opts.backend,
        "optimal",
    )
}

/// Uniform SNR grid `lo, lo + step, ..., <= hi`.
pub fn snr_grid(lo_db: f64, hi_db: f64, step_db: f64) -> Vec<f64> {
    let n = ((hi_db - lo_db) / step_db + 1e-9).floor() as usize;
    (0..=n).map(|i| lo_db + i as f64 * step_db).collect()
}

pub const BRUTE_FORCE_MAX_USERS: usize = 5;
pub const BRUTE_FORCE_MAX_RBS: usize = 5;
pub const BRUTE_FORCE_MAX_CHOICES: usize = 4096;

/// Witness of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub supported: usize,
    pub allocations: Vec<UserAllocation>,
}

#[derive(Clone, Copy)]
struct Choice {
    rb: usize,
    cr: CompressionRatio,
    snr_db: f64,
    power_w: f64,
}

struct Search<'a> {
    /// Per user, every (RB, ratio, SNR) that satisfies both constraints,
    /// sorted by power.
    choices: &'a [Vec<Choice>],
    budget: f64,
    best: usize,
    best_pick: Vec<Option<Choice>>,
    pick: Vec<Option<Choice>>,
    rb_used: Vec<bool>,
}

impl Search<'_> {
    /// Cheapest power that `extra` more users from `from..` could need,
    /// ignoring RB conflicts.
    fn lower_bound(&self, from: usize, extra: usize) -> f64 {
        if extra == 0 {
            return 0.0;
        }
        let mut mins: Vec<f64> = self.choices[from..]
            .iter()
            .filter_map(|c| c.first().map(|c| c.power_w))
            .collect();
        if mins.len() < extra {
            return f64::INFINITY;
        }
        mins.sort_by(f64::total_cmp);
        mins[..extra].iter().sum()
    }

    fn run(&mut self, k: usize, count: usize, spent: f64) {
        if count > self.best {
            self.best = count;
            self.best_pick = self.pick.clone();
        }
        let remaining = self.choices.len() - k;
        if k == self.choices.len() || count + remaining <= self.best {
            return;
        }
        let need = self.best + 1 - count;
        let mut tried = vec![false; self.rb_used.len()];
        for idx in 0..self.choices[k].len() {
            let c = self.choices[k][idx];
            // choices are sorted, so later ones only cost more
            if spent + c.power_w + self.lower_bound(k + 1, need.saturating_sub(1)) > self.budget {
                break;
            }
            // same RB at a higher price leaves the same subproblem with less budget
            if self.rb_used[c.rb] || tried[c.rb] {
                continue;
            }
            tried[c.rb] = true;
            self.rb_used[c.rb] = true;
            self.pick[k] = Some(c);
            self.run(k + 1, count + 1, spent + c.power_w);
            self.pick[k] = None;
            self.rb_used[c.rb] = false;
        }
        self.run(k + 1, count, spent);
    }
}

/// Exhaustive joint search over RB pairings, compression ratios and SNR
/// values (the grid plus each ratio's threshold SNR) for every user, maximizing the number of users that meet
/// both constraints within the budget. Shares nothing with the
/// matrix/bisection path beyond the scenario and model, and is meant as an
/// oracle for tiny instances.
pub fn brute_force_p1(
    scenario: &Scenario,
    model: &PsnrModel,
    snr_grid_db: &[f64],
) -> Result<BruteForceResult, AllocError> {
    let config = &scenario.config;
    let (k, m) = (scenario.users.len(), config.num_rbs);
    if k > BRUTE_FORCE_MAX_USERS || m > BRUTE_FORCE_MAX_RBS {
        return Err(AllocError::TooLarge(format!(
            "{k} users x {m} RBs exceeds {BRUTE_FORCE_MAX_USERS} x {BRUTE_FORCE_MAX_RBS}"
        )));
    }
    let per_pair = config.cr_set.len() * (snr_grid_db.len() + 1);
    if per_pair > BRUTE_FORCE_MAX_CHOICES {
        return Err(AllocError::TooLarge(format!(
            "{per_pair} (ratio, SNR) choices per pair exceeds {BRUTE_FORCE_MAX_CHOICES}"
        )));
    }

    let mut choices = Vec::with_capacity(k);
    for user in &scenario.users {
        let mut list = Vec::new();
        for rb in 0..m {
            let gains = user.rb_gains(config, rb);
            for &cr in &config.cr_set {
                if transmission_delay(cr.value(), config) > user.delay_bound_s {
                    continue;
                }
                // the grid alone would miss the cheapest point between nodes
                let threshold = match model.min_snr_for_psnr(
                    cr.value(),
                    user.psnr_bound_db,
                    DEFAULT_SNR_TOL_DB,
                )? {
                    MinSnr::Found { snr_db, .. } => Some(snr_db),
                    MinSnr::Infeasible => None,
                };
                for snr_db in snr_grid_db.iter().copied().chain(threshold) {
                    if model.evaluate(cr.value(), snr_db)? < user.psnr_bound_db {
                        continue;
                    }
                    let Some(per_sub) =
                        equalizing_powers(gains, snr_db, config.noise_power_per_subchannel_w)
                    else {
                        continue;
                    };
                    list.push(Choice {
                        rb,
                        cr,
                        snr_db,
                        power_w: per_sub.iter().sum(),
                    });
                }
            }
        }
        list.sort_by(|a, b| a.power_w.total_cmp(&b.power_w));
        choices.push(list);
    }

    let mut search = Search {
        choices: &choices,
        budget: config.bs_power_budget_w,
        best: 0,
        best_pick: vec![None; k],
        pick: vec![None; k],
        rb_used: vec![false; m],
    };
    search.run(0, 0, 0.0);

    let allocations = search
        .best_pick
        .iter()
        .enumerate()
        .filter_map(|(user, c)| {
            c.map(|c| UserAllocation {
                user,
                rb: c.rb,
                cr: c.cr,
                snr_db: c.snr_db,
                power_w: c.power_w,
            })
        })
        .collect();
    Ok(BruteForceResult {
        supported: search.best,
        allocations,
    })
}
