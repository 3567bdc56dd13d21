//! Interior-point solution of the LP relaxation of the `J`-assignment
//! problem:
//!
//! ```text
//! min  sum c_km a_km
//! s.t. sum_m a_km <= 1   (each user)
//!      sum_k a_km <= 1   (each RB)
//!      sum a_km    = J
//!      a >= 0
//! ```
//!
//! Only allowed pairs become variables. The two `<=` families get slack
//! variables, giving a standard-form LP with `K + M + 1` equality rows that
//! is solved by a primal-dual method: an affine-scaling predictor followed
//! by a Mehrotra centering corrector, stepping a fixed fraction of the way
//! to the boundary. The normal equations are only `(K + M + 1)` square, so a
//! dense Cholesky factorization per iteration is cheap.

use nalgebra::{DMatrix, DVector};

use super::{
    flow::solve_k_assignment_flow, max_matching_size, Assignment, CostMatrix, SolverError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Relative tolerance on the duality gap and on the residuals.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_to_boundary: f64,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
            step_to_boundary: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    rows: usize,
    cols: usize,
    /// Row-major fractional assignment; forbidden pairs are 0.
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.alpha[row * self.cols + col]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Tab-separated dump of the fractional matrix.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|m| format!("{:.6}", self.get(k, m)))
                .collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Sparse structure of the constraint matrix. Variable order: one per
/// allowed pair, then one slack per row, then one slack per column.
struct Structure {
    pairs: Vec<(usize, usize)>,
    rows: usize,
    cols: usize,
}

impl Structure {
    fn num_vars(&self) -> usize {
        self.pairs.len() + self.rows + self.cols
    }

    fn num_constraints(&self) -> usize {
        self.rows + self.cols + 1
    }

    fn card(&self) -> usize {
        self.rows + self.cols
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let e = self.pairs.len();
        let mut y = vec![0.0; self.num_constraints()];
        for (i, &(k, m)) in self.pairs.iter().enumerate() {
            y[k] += x[i];
            y[self.rows + m] += x[i];
            y[self.card()] += x[i];
        }
        for k in 0..self.rows {
            y[k] += x[e + k];
        }
        for m in 0..self.cols {
            y[self.rows + m] += x[e + self.rows + m];
        }
        y
    }

    fn mul_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.num_vars());
        z.extend(
            self.pairs
                .iter()
                .map(|&(k, m)| y[k] + y[self.rows + m] + y[self.card()]),
        );
        z.extend_from_slice(&y[..self.rows + self.cols]);
        z
    }

    /// `A diag(d) A^T`.
    fn normal_matrix(&self, d: &[f64]) -> DMatrix<f64> {
        let n = self.num_constraints();
        let c = self.card();
        let e = self.pairs.len();
        let mut mat = DMatrix::<f64>::zeros(n, n);
        for (i, &(k, m)) in self.pairs.iter().enumerate() {
            let r = self.rows + m;
            let w = d[i];
            mat[(k, k)] += w;
            mat[(r, r)] += w;
            mat[(c, c)] += w;
            mat[(k, r)] += w;
            mat[(r, k)] += w;
            mat[(k, c)] += w;
            mat[(c, k)] += w;
            mat[(r, c)] += w;
            mat[(c, r)] += w;
        }
        for k in 0..self.rows {
            mat[(k, k)] += d[e + k];
        }
        for m in 0..self.cols {
            mat[(self.rows + m, self.rows + m)] += d[e + self.rows + m];
        }
        mat
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest `t <= 1` keeping `v + t * dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .fold(1.0, |t: f64, (x, d)| t.min(-x / d))
}

fn check_cardinality(costs: &CostMatrix, j: usize) -> Result<(), SolverError> {
    let max = costs.rows().min(costs.cols());
    if j > max {
        return Err(SolverError::Cardinality { j, max });
    }
    costs.validate()?;
    if j > max_matching_size(costs) {
        return Err(SolverError::Infeasible { j });
    }
    Ok(())
}

/// Solves the LP relaxation to the requested duality-gap tolerance.
pub fn solve_p5_interior_point(
    costs: &CostMatrix,
    j: usize,
    opts: &LpOptions,
) -> Result<LpSolution, SolverError> {
    check_cardinality(costs, j)?;
    let (rows, cols) = (costs.rows(), costs.cols());
    let zero = LpSolution {
        rows,
        cols,
        alpha: vec![0.0; rows * cols],
        objective: 0.0,
        iterations: 0,
    };
    if j == 0 {
        return Ok(zero);
    }

    let allowed: Vec<(usize, usize, f64)> = costs.allowed().collect();
    let st = Structure {
        pairs: allowed.iter().map(|&(k, m, _)| (k, m)).collect(),
        rows,
        cols,
    };
    let n = st.num_vars();
    let scale = allowed.iter().fold(0.0f64, |a, p| a.max(p.2));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut c = vec![0.0; n];
    for (i, p) in allowed.iter().enumerate() {
        c[i] = p.2 / scale;
    }
    let mut b = vec![1.0; st.num_constraints()];
    b[st.card()] = j as f64;

    let mut x = vec![1.0; n];
    let mut s = vec![1.0; n];
    let mut y = vec![0.0; st.num_constraints()];
    let b_norm = 1.0 + inf_norm(&b);
    let c_norm = 1.0 + inf_norm(&c);

    for iter in 0..opts.max_iterations {
        let ax = st.mul(&x);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let aty = st.mul_transpose(&y);
        let rd: Vec<f64> = (0..n).map(|i| c[i] - aty[i] - s[i]).collect();
        let pobj = dot(&c, &x);
        let dobj = dot(&b, &y);
        let gap = (pobj - dobj).abs();
        if inf_norm(&rp) / b_norm < opts.tol
            && inf_norm(&rd) / c_norm < opts.tol
            && gap <= opts.tol * pobj.abs().max(dobj.abs()).max(1e-300)
        {
            return Ok(finish(&st, costs, x, iter));
        }

        let mu = dot(&x, &s) / n as f64;
        let d: Vec<f64> = x.iter().zip(&s).map(|(xi, si)| xi / si).collect();
        let chol = factor(st.normal_matrix(&d)).ok_or(SolverError::NotConverged {
            iterations: iter,
            best_bound: dobj * scale,
        })?;

        // Newton system for complementarity target `rc`
        let solve = |rc: &[f64]| {
            let t: Vec<f64> = (0..n).map(|i| d[i] * rd[i] - rc[i] / s[i]).collect();
            let at = st.mul(&t);
            let rhs = DVector::from_iterator(rp.len(), rp.iter().zip(&at).map(|(a, b)| a + b));
            let dy = chol.solve(&rhs);
            let dy: Vec<f64> = dy.iter().copied().collect();
            let atdy = st.mul_transpose(&dy);
            let ds: Vec<f64> = (0..n).map(|i| rd[i] - atdy[i]).collect();
            let dx: Vec<f64> = (0..n).map(|i| (rc[i] - x[i] * ds[i]) / s[i]).collect();
            (dx, dy, ds)
        };

        let rc_aff: Vec<f64> = x.iter().zip(&s).map(|(xi, si)| -xi * si).collect();
        let (dx_a, _, ds_a) = solve(&rc_aff);
        let ap = max_step(&x, &dx_a);
        let ad = max_step(&s, &ds_a);
        let mu_aff = (0..n)
            .map(|i| (x[i] + ap * dx_a[i]) * (s[i] + ad * ds_a[i]))
            .sum::<f64>()
            / n as f64;
        let sigma = (mu_aff / mu).powi(3);

        let rc: Vec<f64> = (0..n)
            .map(|i| sigma * mu - x[i] * s[i] - dx_a[i] * ds_a[i])
            .collect();
        let (dx, dy, ds) = solve(&rc);
        let ap = (opts.step_to_boundary * max_step(&x, &dx)).min(1.0);
        let ad = (opts.step_to_boundary * max_step(&s, &ds)).min(1.0);
        for i in 0..n {
            x[i] += ap * dx[i];
            s[i] += ad * ds[i];
        }
        for (yi, dyi) in y.iter_mut().zip(&dy) {
            *yi += ad * dyi;
        }
    }
    Err(SolverError::NotConverged {
        iterations: opts.max_iterations,
        best_bound: dot(&b, &y) * scale,
    })
}

/// Cholesky with growing diagonal regularization for near-singular systems.
fn factor(mat: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag_max = mat.diagonal().iter().fold(0.0f64, |a, v| a.max(*v));
    let mut reg = 1e-14 * diag_max.max(1e-300);
    for _ in 0..8 {
        let mut m = mat.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch);
        }
        reg *= 100.0;
    }
    None
}

fn finish(st: &Structure, costs: &CostMatrix, x: Vec<f64>, iterations: usize) -> LpSolution {
    let mut alpha = vec![0.0; st.rows * st.cols];
    let mut objective = 0.0;
    for (i, &(k, m)) in st.pairs.iter().enumerate() {
        alpha[k * st.cols + m] = x[i];
        objective += x[i] * costs.get(k, m).expect("allowed pair");
    }
    LpSolution {
        rows: st.rows,
        cols: st.cols,
        alpha,
        objective,
        iterations,
    }
}

/// Extracts an integral `j`-assignment whose cost is within `tol`
/// (relative) of the LP objective.
///
/// Near-integral solutions are thresholded at 1/2. Otherwise the exact
/// solver is run on the LP's support.
pub fn round_lp_solution(
    lp: &LpSolution,
    costs: &CostMatrix,
    j: usize,
    tol: f64,
) -> Result<Assignment, SolverError> {
    let bound = lp.objective + tol * lp.objective.abs().max(1e-300);
    let certified = |a: &Assignment| -> bool {
        a.cardinality() == j && a.check(costs).is_ok() && a.cost(costs).is_some_and(|c| c <= bound)
    };

    let mut pairs = Vec::new();
    for k in 0..lp.rows() {
        for m in 0..lp.cols() {
            if lp.get(k, m) > 0.5 {
                pairs.push((k, m));
            }
        }
    }
    let thresholded = Assignment::new(pairs);
    if certified(&thresholded) {
        return Ok(thresholded);
    }

    let support = costs.restricted(|k, m| lp.get(k, m) > 1e-6);
    match solve_k_assignment_flow(&support, j) {
        Ok(sol) if certified(&sol.assignment) => Ok(sol.assignment),
        Ok(sol) => Err(SolverError::RoundingFailed(format!(
            "support assignment costs {} > LP bound {bound}",
            sol.cost
        ))),
        Err(e) => Err(SolverError::RoundingFailed(format!(
            "support has no {j}-matching: {e}"
        ))),
    }
}

/// Interior point followed by rounding; returns the integral assignment and
/// its exact cost.
pub fn solve_k_assignment_lp(
    costs: &CostMatrix,
    j: usize,
    opts: &LpOptions,
) -> Result<(Assignment, f64), SolverError> {
    let lp = solve_p5_interior_point(costs, j, opts)?;
    // the rounding certificate needs a little more room than the gap
    let assignment = round_lp_solution(&lp, costs, j, opts.tol.max(1e-9) * 100.0)?;
    let cost = assignment.cost(costs).expect("certified assignment");
    Ok((assignment, cost))
}
