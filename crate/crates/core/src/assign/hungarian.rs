//! Kuhn-Munkres with row/column potentials, O(n^2 m).

use super::{Assignment, CostMatrix, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub struct HungarianSolution {
    /// Matched pairs over allowed entries only.
    pub assignment: Assignment,
    pub cost: f64,
    /// Pairs the full matching could only fill with a forbidden entry; they
    /// are dropped from `assignment`.
    pub forced: Vec<(usize, usize)>,
}

/// Rows <= columns. Returns `col_of_row`.
fn kuhn_munkres(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let rows = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    // row_of[j] = 1-based row matched to 1-based column j, 0 for none
    let mut row_of = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];

    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![usize::MAX; rows];
    for j in 1..=cols {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Full assignment of size `min(K, M)` of least total cost. Forbidden
/// entries cost [`CostMatrix::big_m`], so they are used only when no
/// allowed pair is left; such pairs are reported in `forced`.
pub fn solve_hungarian(costs: &CostMatrix) -> Result<HungarianSolution, SolverError> {
    costs.validate()?;
    let transposed = costs.rows() > costs.cols();
    let work = if transposed {
        costs.transpose()
    } else {
        costs.clone()
    };
    let big_m = work.big_m();
    let dense: Vec<Vec<f64>> = (0..work.rows())
        .map(|k| {
            (0..work.cols())
                .map(|m| work.get(k, m).unwrap_or(big_m))
                .collect()
        })
        .collect();

    let col_of = if work.rows() == 0 {
        Vec::new()
    } else {
        kuhn_munkres(&dense, work.cols())
    };

    let mut pairs = Vec::new();
    let mut forced = Vec::new();
    for (r, &c) in col_of.iter().enumerate() {
        let pair = if transposed { (c, r) } else { (r, c) };
        if costs.get(pair.0, pair.1).is_some() {
            pairs.push(pair);
        } else {
            forced.push(pair);
        }
    }
    forced.sort_unstable();
    let assignment = Assignment::new(pairs);
    let cost = assignment.cost(costs).expect("only allowed pairs kept");
    Ok(HungarianSolution {
        assignment,
        cost,
        forced,
    })
}
