//! Table-driven surrogate for the reconstruction quality of a JSCC link.
//!
//! PSNR is tabulated on a `(compression ratio, SNR)` grid and bilinearly
//! interpolated. Both directions must be nondecreasing; this is checked on
//! construction, and the greedy compression-ratio choice in
//! [`crate::power_min`] depends on it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("compression ratio {cr} outside model grid [{lo}, {hi}]")]
    Domain { cr: f64, lo: f64, hi: f64 },
    #[error("non-monotone model: {0}")]
    NonMonotone(String),
    #[error("malformed model grid: {0}")]
    Grid(String),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("model table: {0}")]
    Csv(#[from] csv::Error),
    #[error("model table i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of a minimum-SNR search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinSnr {
    Found {
        snr_db: f64,
        iterations: u32,
    },
    /// The target exceeds what the model delivers at the top of its SNR grid.
    Infeasible,
}

impl MinSnr {
    pub fn snr_db(self) -> Option<f64> {
        match self {
            MinSnr::Found { snr_db, .. } => Some(snr_db),
            MinSnr::Infeasible => None,
        }
    }
}

pub const DEFAULT_SNR_TOL_DB: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct PsnrModel {
    cr_grid: Vec<f64>,
    snr_grid_db: Vec<f64>,
    /// Row-major `[cr][snr]`.
    psnr_db: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Node {
    cr: f64,
    snr_db: f64,
    psnr_db: f64,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Index `i` such that `grid[i] <= x <= grid[i + 1]`, for `x` inside the grid.
fn bracket(grid: &[f64], x: f64) -> usize {
    let upper = grid.partition_point(|&g| g <= x);
    upper.saturating_sub(1).min(grid.len().saturating_sub(2))
}

impl PsnrModel {
    pub fn new(
        cr_grid: Vec<f64>,
        snr_grid_db: Vec<f64>,
        psnr_db: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if cr_grid.is_empty() || snr_grid_db.is_empty() {
            return Err(ModelError::Grid("grids must be nonempty".into()));
        }
        if !strictly_increasing(&cr_grid) || !strictly_increasing(&snr_grid_db) {
            return Err(ModelError::Grid("grids must be strictly increasing".into()));
        }
        if cr_grid.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(ModelError::Grid(
                "compression ratios must lie in (0, 1]".into(),
            ));
        }
        if snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(ModelError::Grid("SNR grid must be finite".into()));
        }
        if psnr_db.len() != cr_grid.len() * snr_grid_db.len() {
            return Err(ModelError::Grid(format!(
                "table has {} entries, grid needs {}",
                psnr_db.len(),
                cr_grid.len() * snr_grid_db.len()
            )));
        }
        if let Some(i) = psnr_db.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::Grid(format!("table entry {i} is not finite")));
        }
        let model = Self {
            cr_grid,
            snr_grid_db,
            psnr_db,
        };
        model.check_monotone()?;
        Ok(model)
    }

    fn check_monotone(&self) -> Result<(), ModelError> {
        for (i, &cr) in self.cr_grid.iter().enumerate() {
            for j in 1..self.snr_grid_db.len() {
                if self.node(i, j) < self.node(i, j - 1) {
                    return Err(ModelError::NonMonotone(format!(
                        "psnr decreases in snr at cr={cr}, snr_db={} ({} < {})",
                        self.snr_grid_db[j],
                        self.node(i, j),
                        self.node(i, j - 1)
                    )));
                }
            }
        }
        for i in 1..self.cr_grid.len() {
            for (j, &snr) in self.snr_grid_db.iter().enumerate() {
                if self.node(i, j) < self.node(i - 1, j) {
                    return Err(ModelError::NonMonotone(format!(
                        "psnr decreases in cr at cr={}, snr_db={snr} ({} < {})",
                        self.cr_grid[i],
                        self.node(i, j),
                        self.node(i - 1, j)
                    )));
                }
            }
        }
        Ok(())
    }

    fn node(&self, cr_idx: usize, snr_idx: usize) -> f64 {
        self.psnr_db[cr_idx * self.snr_grid_db.len() + snr_idx]
    }

    /// Synthetic reference table over the eight default compression ratios
    /// and 0..=20 dB in 1 dB steps.
    ///
    /// Each row is a saturating curve whose ceiling grows with the
    /// compression ratio. The numbers are made up; only the shape (ordered,
    /// saturating curves) is meaningful.
    pub fn synthetic() -> Self {
        let cr_grid: Vec<f64> = crate::ratio::CompressionRatio::default_set()
            .into_iter()
            .map(|r| r.value())
            .collect();
        let snr_grid_db: Vec<f64> = (0..=20).map(f64::from).collect();
        let knee_db = 7.0;
        let span = 1.0 - (-20.0f64 / knee_db).exp();
        let mut table = Vec::with_capacity(cr_grid.len() * snr_grid_db.len());
        for &cr in &cr_grid {
            let ceiling = 17.0 + 11.0 * (6.0 * cr).sqrt();
            let floor = ceiling - 10.0;
            for &snr in &snr_grid_db {
                let shape = (1.0 - (-snr / knee_db).exp()) / span;
                table.push(floor + 10.0 * shape);
            }
        }
        Self::new(cr_grid, snr_grid_db, table).expect("synthetic table is monotone")
    }

    pub fn cr_grid(&self) -> &[f64] {
        &self.cr_grid
    }

    pub fn snr_grid_db(&self) -> &[f64] {
        &self.snr_grid_db
    }

    pub fn snr_range_db(&self) -> (f64, f64) {
        (self.snr_grid_db[0], *self.snr_grid_db.last().unwrap())
    }

    pub fn covers_cr(&self, cr: f64) -> bool {
        cr >= self.cr_grid[0] && cr <= *self.cr_grid.last().unwrap()
    }

    /// PSNR in dB at compression ratio `cr` and received SNR `snr_db`.
    ///
    /// SNR outside the grid is clamped to the nearest edge; `cr` must lie
    /// inside the grid.
    pub fn evaluate(&self, cr: f64, snr_db: f64) -> Result<f64, ModelError> {
        if !self.covers_cr(cr) {
            return Err(ModelError::Domain {
                cr,
                lo: self.cr_grid[0],
                hi: *self.cr_grid.last().unwrap(),
            });
        }
        let (smin, smax) = self.snr_range_db();
        let snr = snr_db.clamp(smin, smax);

        let row = |i: usize| -> f64 {
            if self.snr_grid_db.len() == 1 {
                return self.node(i, 0);
            }
            let j = bracket(&self.snr_grid_db, snr);
            let (s0, s1) = (self.snr_grid_db[j], self.snr_grid_db[j + 1]);
            let t = (snr - s0) / (s1 - s0);
            self.node(i, j) + t * (self.node(i, j + 1) - self.node(i, j))
        };

        if self.cr_grid.len() == 1 {
            return Ok(row(0));
        }
        let i = bracket(&self.cr_grid, cr);
        let (c0, c1) = (self.cr_grid[i], self.cr_grid[i + 1]);
        let u = (cr - c0) / (c1 - c0);
        let (lo, hi) = (row(i), row(i + 1));
        Ok(lo + u * (hi - lo))
    }

    /// Smallest SNR (to within `tol_db`) at which the model reaches
    /// `target_db`, searched by bisection over the model's SNR grid.
    ///
    /// A `Found` result `r` always satisfies `evaluate(cr, r) >= target_db`.
    pub fn min_snr_for_psnr(
        &self,
        cr: f64,
        target_db: f64,
        tol_db: f64,
    ) -> Result<MinSnr, ModelError> {
        if !(tol_db > 0.0) {
            return Err(ModelError::Tolerance(tol_db));
        }
        let (mut lo, mut hi) = self.snr_range_db();
        let at_lo = self.evaluate(cr, lo)?;
        if at_lo >= target_db {
            return Ok(MinSnr::Found {
                snr_db: lo,
                iterations: 0,
            });
        }
        let at_hi = self.evaluate(cr, hi)?;
        if at_hi < at_lo {
            return Err(ModelError::NonMonotone(format!(
                "psnr at cr={cr} falls from {at_lo} to {at_hi} across the SNR grid"
            )));
        }
        if at_hi < target_db {
            return Ok(MinSnr::Infeasible);
        }
        // invariant: evaluate(lo) < target <= evaluate(hi)
        let mut iterations = 0;
        while hi - lo > tol_db {
            let mid = 0.5 * (lo + hi);
            if self.evaluate(cr, mid)? >= target_db {
                hi = mid;
            } else {
                lo = mid;
            }
            iterations += 1;
        }
        Ok(MinSnr::Found {
            snr_db: hi,
            iterations,
        })
    }

    /// Reads a `cr,snr_db,psnr_db` table; the nodes must form a complete grid.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, ModelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["cr", "snr_db", "psnr_db"] {
            return Err(ModelError::Grid(format!(
                "expected header `cr,snr_db,psnr_db`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let nodes: Vec<Node> = rdr.deserialize().collect::<Result<_, _>>()?;

        let mut crs: Vec<f64> = nodes.iter().map(|n| n.cr).collect();
        let mut snrs: Vec<f64> = nodes.iter().map(|n| n.snr_db).collect();
        for v in [&mut crs, &mut snrs] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::Grid("grid coordinates must be finite".into()));
            }
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut table = vec![f64::NAN; crs.len() * snrs.len()];
        let mut seen = vec![false; table.len()];
        for n in &nodes {
            let i = crs.binary_search_by(|c| c.total_cmp(&n.cr)).unwrap();
            let j = snrs.binary_search_by(|s| s.total_cmp(&n.snr_db)).unwrap();
            let idx = i * snrs.len() + j;
            if seen[idx] {
                return Err(ModelError::Grid(format!(
                    "duplicate node cr={}, snr_db={}",
                    n.cr, n.snr_db
                )));
            }
            seen[idx] = true;
            table[idx] = n.psnr_db;
        }
        if let Some(idx) = seen.iter().position(|s| !s) {
            return Err(ModelError::Grid(format!(
                "missing node cr={}, snr_db={}",
                crs[idx / snrs.len()],
                snrs[idx % snrs.len()]
            )));
        }
        Self::new(crs, snrs, table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_csv_reader(fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for (i, &cr) in self.cr_grid.iter().enumerate() {
            for (j, &snr_db) in self.snr_grid_db.iter().enumerate() {
                wtr.serialize(Node {
                    cr,
                    snr_db,
                    psnr_db: self.node(i, j),
                })
                .expect("in-memory write");
            }
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
