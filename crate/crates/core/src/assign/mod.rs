//! Exact solvers for minimum-cost bipartite assignment.
//!
//! [`solve_k_assignment_flow`] picks exactly `J` user/RB pairs of least total
//! cost and is the reference backend. [`solve_p5_interior_point`] solves the
//! LP relaxation of the same problem; its vertices are integral, so after
//! [`round_lp_solution`] both backends agree. [`solve_hungarian`] is the
//! classic full assignment used by the Hungarian benchmark.

mod flow;
mod hungarian;
mod interior_point;

pub use flow::{solve_k_assignment_flow, FlowSolution};
pub use hungarian::{solve_hungarian, HungarianSolution};
pub use interior_point::{
    round_lp_solution, solve_k_assignment_lp, solve_p5_interior_point, LpOptions, LpSolution,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("cardinality {j} out of range 0..={max}")]
    Cardinality { j: usize, max: usize },
    #[error("no assignment of exactly {j} allowed pairs exists")]
    Infeasible { j: usize },
    #[error("interior point stopped after {iterations} iterations (best bound {best_bound})")]
    NotConverged { iterations: usize, best_bound: f64 },
    #[error("could not round LP solution: {0}")]
    RoundingFailed(String),
    #[error("cost at ({row}, {col}) must be finite and >= 0, got {value}")]
    BadCost { row: usize, col: usize, value: f64 },
}

/// Dense `K x M` cost table; `None` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut costs = Vec::with_capacity(rows * cols);
        for k in 0..rows {
            for m in 0..cols {
                costs.push(f(k, m));
            }
        }
        Self { rows, cols, costs }
    }

    /// Matrix with every pair allowed.
    pub fn dense(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self::from_fn(rows.len(), cols, |k, m| Some(rows[k][m]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.costs[row * self.cols + col]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |m, k| self.get(k, m))
    }

    /// Allowed pairs in row-major order.
    pub fn allowed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.costs
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.map(|c| (i / self.cols, i % self.cols, c)))
    }

    /// Penalty standing in for a forbidden pair: strictly larger than any
    /// sum of allowed costs, so no optimum uses one unless forced to.
    pub fn big_m(&self) -> f64 {
        1.0 + self.allowed().map(|(_, _, c)| c).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        match self
            .allowed()
            .find(|&(_, _, c)| !(c.is_finite() && c >= 0.0))
        {
            Some((row, col, value)) => Err(SolverError::BadCost { row, col, value }),
            None => Ok(()),
        }
    }

    /// Same matrix with every pair outside `keep` forbidden.
    pub fn restricted(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        Self::from_fn(self.rows, self.cols, |k, m| {
            self.get(k, m).filter(|_| keep(k, m))
        })
    }
}

/// Set of `(row, col)` pairs using each row and each column at most once.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
}

impl Assignment {
    /// Normalizes pair order (sorted by row) so equal sets compare equal.
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn cardinality(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }

    /// Sum of the pair costs, accumulated in row order; `None` if a pair is
    /// forbidden.
    pub fn cost(&self, costs: &CostMatrix) -> Option<f64> {
        self.pairs.iter().map(|&(k, m)| costs.get(k, m)).sum()
    }

    /// Checks that no row or column repeats and every pair is allowed.
    pub fn check(&self, costs: &CostMatrix) -> Result<(), String> {
        let mut row_used = vec![false; costs.rows()];
        let mut col_used = vec![false; costs.cols()];
        for &(k, m) in &self.pairs {
            if k >= costs.rows() || m >= costs.cols() {
                return Err(format!("pair ({k}, {m}) out of bounds"));
            }
            if std::mem::replace(&mut row_used[k], true) {
                return Err(format!("row {k} assigned twice"));
            }
            if std::mem::replace(&mut col_used[m], true) {
                return Err(format!("column {m} assigned twice"));
            }
            if costs.get(k, m).is_none() {
                return Err(format!("pair ({k}, {m}) is forbidden"));
            }
        }
        Ok(())
    }
}

/// Size of a maximum matching over the allowed pairs (augmenting paths).
pub fn max_matching_size(costs: &CostMatrix) -> usize {
    let adj: Vec<Vec<usize>> = (0..costs.rows())
        .map(|k| {
            (0..costs.cols())
                .filter(|&m| costs.get(k, m).is_some())
                .collect()
        })
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; costs.cols()];

    fn augment(
        k: usize,
        adj: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &m in &adj[k] {
            if seen[m] {
                continue;
            }
            seen[m] = true;
            if owner[m].is_none() || augment(owner[m].unwrap(), adj, owner, seen) {
                owner[m] = Some(k);
                return true;
            }
        }
        false
    }

    let mut size = 0;
    for k in 0..costs.rows() {
        let mut seen = vec![false; costs.cols()];
        if augment(k, &adj, &mut owner, &mut seen) {
            size += 1;
        }
    }
    size
}

/// Which exact method solves the fixed-cardinality subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Backend {
    #[default]
    Flow,
    InteriorPoint(LpOptions),
}

/// Minimum-cost assignment of exactly `j` pairs with the chosen backend.
/// Returns the assignment and its cost recomputed from the matrix.
pub fn solve_k_assignment(
    costs: &CostMatrix,
    j: usize,
    backend: Backend,
) -> Result<(Assignment, f64), SolverError> {
    match backend {
        Backend::Flow => solve_k_assignment_flow(costs, j).map(|s| (s.assignment, s.cost)),
        Backend::InteriorPoint(opts) => solve_k_assignment_lp(costs, j, &opts),
    }
}
