//! Monte Carlo sweeps over the BS power budget, requirement classes and user
//! count, aggregated into plot-ready CSV.
//!
//! Every drop is an independent scenario derived from `(master_seed, drop)`,
//! and every method sees the same drop, so comparisons are paired.

use std::fmt::Write as _;
use std::io;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{Backend, LpOptions};
use crate::baselines::{
    hungarian_greedy_on, random_pairing_on, uniform_power_on, Method, UniformShare,
};
use crate::capacity::{solve_capacity_with_matrix, AllocError, AllocationResult};
use crate::power_min::{build_power_matrix, CrPolicy, P2Options, PowerMatrix};
use crate::psnr_model::PsnrModel;
use crate::scenario::{generate_scenario, Scenario, ScenarioError, SystemConfig};

pub const CSV_HEADER: &str =
    "method,swept_var,swept_value,class,mean_supported,mean_access_ratio,std_supported,num_drops";

/// Class label for rows that aggregate over all users.
pub const ALL_USERS: &str = "all";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep spec: {0}")]
    Spec(String),
    #[error("sweep spec: {0}")]
    UnknownMethod(#[from] crate::baselines::UnknownMethod),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("malformed sweep spec document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("sweep output: {0}")]
    Io(#[from] io::Error),
}

impl From<crate::psnr_model::ModelError> for SweepError {
    fn from(e: crate::psnr_model::ModelError) -> Self {
        SweepError::Alloc(AllocError::Model(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptVariable {
    /// `values` are BS power budgets (W).
    BsPower,
    /// `values` are budgets; users draw their delay bound from `classes`
    /// (s) and share the PSNR floor `class_fixed` (dB).
    DelayClasses,
    /// `values` are budgets; users draw their PSNR floor from `classes`
    /// (dB) and share the delay bound `class_fixed` (s).
    PsnrClasses,
    /// `values` are user counts; the budget comes from `base`.
    UserCount,
}

impl SweptVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweptVariable::BsPower => "bs_power",
            SweptVariable::DelayClasses => "delay_classes",
            SweptVariable::PsnrClasses => "psnr_classes",
            SweptVariable::UserCount => "user_count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Flow,
    Lp,
}

impl BackendChoice {
    pub fn backend(self) -> Backend {
        match self {
            BackendChoice::Flow => Backend::Flow,
            BackendChoice::Lp => Backend::InteriorPoint(LpOptions::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub base: SystemConfig,
    pub swept_var: SweptVariable,
    pub values: Vec<f64>,
    pub num_drops: usize,
    pub methods: Vec<String>,
    pub master_seed: u64,
    #[serde(default)]
    pub classes: Vec<f64>,
    #[serde(default)]
    pub class_fixed: Option<f64>,
    #[serde(default)]
    pub uniform_share: UniformShare,
    #[serde(default)]
    pub backend: BackendChoice,
}

/// Ten log-spaced budgets from 10 mW to 1 W.
pub fn default_power_points() -> Vec<f64> {
    (0..10)
        .map(|i| 10f64.powf(-2.0 + 2.0 * f64::from(i) / 9.0))
        .collect()
}

impl SweepSpec {
    /// Supported users vs. BS power for the optimal method and the three
    /// benchmarks.
    pub fn power_sweep(num_drops: usize, master_seed: u64) -> Self {
        Self {
            base: SystemConfig::default(),
            swept_var: SweptVariable::BsPower,
            values: default_power_points(),
            num_drops,
            methods: ["optimal", "hungarian", "random", "uniform"]
                .map(String::from)
                .to_vec(),
            master_seed,
            classes: Vec::new(),
            class_fixed: None,
            uniform_share: UniformShare::default(),
            backend: BackendChoice::default(),
        }
    }

    /// Optimal method against fixed compression ratios.
    pub fn fixed_cr_sweep(num_drops: usize, master_seed: u64) -> Self {
        Self {
            methods: [
                "optimal",
                "fixed-cr:1/24",
                "fixed-cr:1/12",
                "fixed-cr:1/8",
                "fixed-cr:1/6",
            ]
            .map(String::from)
            .to_vec(),
            ..Self::power_sweep(num_drops, master_seed)
        }
    }

    /// Delay classes 4/5/6 ms with a common 24 dB PSNR floor.
    pub fn delay_class_sweep(num_drops: usize, master_seed: u64) -> Self {
        Self {
            swept_var: SweptVariable::DelayClasses,
            methods: vec!["optimal".into()],
            classes: vec![4e-3, 5e-3, 6e-3],
            class_fixed: Some(24.0),
            ..Self::power_sweep(num_drops, master_seed)
        }
    }

    /// PSNR classes 21/23/25 dB with a common 5 ms delay bound.
    pub fn psnr_class_sweep(num_drops: usize, master_seed: u64) -> Self {
        Self {
            swept_var: SweptVariable::PsnrClasses,
            methods: vec!["optimal".into()],
            classes: vec![21.0, 23.0, 25.0],
            class_fixed: Some(5e-3),
            ..Self::power_sweep(num_drops, master_seed)
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, SweepError> {
        let spec: SweepSpec = serde_json::from_str(doc)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, SweepError> {
        Ok(self
            .methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_, _>>()?)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: &str| Err(SweepError::Spec(m.to_string()));
        if self.values.is_empty() {
            return fail("values must not be empty");
        }
        if self.num_drops == 0 {
            return fail("num_drops must be at least 1");
        }
        if self.methods.is_empty() {
            return fail("methods must not be empty");
        }
        self.parsed_methods()?;
        self.base.validate()?;
        match self.swept_var {
            SweptVariable::UserCount => {
                if self.values.iter().any(|v| !(v.fract() == 0.0 && *v >= 0.0)) {
                    return fail("user_count values must be nonnegative integers");
                }
            }
            _ => {
                if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return fail("power values must be finite and >= 0");
                }
            }
        }
        if matches!(
            self.swept_var,
            SweptVariable::DelayClasses | SweptVariable::PsnrClasses
        ) {
            if self.classes.is_empty() {
                return fail("class sweeps need a nonempty `classes` list");
            }
            if self.class_fixed.is_none() {
                return fail("class sweeps need `class_fixed`");
            }
            if self.swept_var == SweptVariable::DelayClasses
                && self.classes.iter().any(|t| !(*t > 0.0))
            {
                return fail("delay classes must be > 0");
            }
            if self.swept_var == SweptVariable::PsnrClasses && !(self.class_fixed.unwrap() > 0.0) {
                return fail("class_fixed delay bound must be > 0");
            }
        }
        Ok(())
    }
}

/// Aggregated line of the output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub swept_var: String,
    pub swept_value: f64,
    pub class: String,
    pub mean_supported: f64,
    pub mean_access_ratio: f64,
    pub std_supported: f64,
    pub num_drops: usize,
}

/// One method's outcome on one drop at one swept value, per class.
#[derive(Debug, Clone, PartialEq)]
pub struct DropOutcome {
    pub drop: usize,
    pub method: Method,
    pub value: f64,
    pub class: String,
    pub supported: usize,
    pub population: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub outcomes: Vec<DropOutcome>,
}

impl SweepResult {
    pub fn row(&self, method: &str, value: f64, class: &str) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.swept_value == value && r.class == class)
    }

    pub fn outcome(
        &self,
        drop: usize,
        method: Method,
        value: f64,
        class: &str,
    ) -> Option<&DropOutcome> {
        self.outcomes
            .iter()
            .find(|o| o.drop == drop && o.method == method && o.value == value && o.class == class)
    }
}

/// Seeds for one drop: `(scenario seed, pairing seed)`.
pub fn drop_seeds(master_seed: u64, drop: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(drop as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Label used for a class value in the output.
pub fn class_label(value: f64) -> String {
    value.to_string()
}

struct Drop {
    scenario: Scenario,
    /// Class index per user, empty when the sweep has no classes.
    class_of: Vec<usize>,
}

fn make_drop(spec: &SweepSpec, seed: u64, num_users: usize) -> Result<Drop, SweepError> {
    let mut config = spec.base.clone();
    config.rng_seed = seed;
    config.num_users = num_users;
    let mut scenario = generate_scenario(&config)?;
    let mut class_of = Vec::new();
    if matches!(
        spec.swept_var,
        SweptVariable::DelayClasses | SweptVariable::PsnrClasses
    ) {
        // a stream no user id can reach
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let fixed = spec.class_fixed.expect("validated");
        for user in &mut scenario.users {
            let c = (rng.next_u64() % spec.classes.len() as u64) as usize;
            class_of.push(c);
            match spec.swept_var {
                SweptVariable::DelayClasses => {
                    user.delay_bound_s = spec.classes[c];
                    user.psnr_bound_db = fixed;
                }
                _ => {
                    user.psnr_bound_db = spec.classes[c];
                    user.delay_bound_s = fixed;
                }
            }
        }
    }
    Ok(Drop { scenario, class_of })
}

struct Matrices {
    adaptive: Option<PowerMatrix>,
    fixed: Vec<(crate::ratio::CompressionRatio, PowerMatrix)>,
}

impl Matrices {
    fn build(
        scenario: &Scenario,
        model: &PsnrModel,
        methods: &[Method],
    ) -> Result<Self, SweepError> {
        let needs_adaptive = methods.iter().any(|m| !matches!(m, Method::FixedCr(_)));
        let adaptive = if needs_adaptive {
            Some(build_power_matrix(scenario, model, &P2Options::default())?)
        } else {
            None
        };
        let mut fixed = Vec::new();
        for m in methods {
            if let Method::FixedCr(cr) = *m {
                if fixed.iter().all(|(c, _)| *c != cr) {
                    let opts = P2Options {
                        policy: CrPolicy::Fixed(cr),
                        ..P2Options::default()
                    };
                    fixed.push((cr, build_power_matrix(scenario, model, &opts)?));
                }
            }
        }
        Ok(Self { adaptive, fixed })
    }

    fn for_method(&self, method: Method) -> &PowerMatrix {
        match method {
            Method::FixedCr(cr) => &self.fixed.iter().find(|(c, _)| *c == cr).unwrap().1,
            _ => self.adaptive.as_ref().unwrap(),
        }
    }
}

/// Runs one allocator on a drop at the given budget.
#[allow(clippy::too_many_arguments)]
pub fn allocate(
    method: Method,
    scenario: &Scenario,
    model: &PsnrModel,
    matrix: &PowerMatrix,
    budget_w: f64,
    pairing_seed: u64,
    spec_share: UniformShare,
    backend: Backend,
) -> Result<AllocationResult, AllocError> {
    Ok(match method {
        Method::Optimal | Method::FixedCr(_) => {
            solve_capacity_with_matrix(
                scenario,
                model,
                matrix,
                budget_w,
                backend,
                &method.to_string(),
            )?
            .0
        }
        Method::Hungarian => hungarian_greedy_on(scenario, model, matrix, budget_w)?,
        Method::Random => random_pairing_on(scenario, model, matrix, budget_w, pairing_seed),
        Method::Uniform => {
            uniform_power_on(scenario, model, matrix, budget_w, pairing_seed, spec_share)
        }
    })
}

fn outcomes_for(
    spec: &SweepSpec,
    drop: &Drop,
    drop_idx: usize,
    method: Method,
    value: f64,
    result: &AllocationResult,
) -> Vec<DropOutcome> {
    let mut out = vec![DropOutcome {
        drop: drop_idx,
        method,
        value,
        class: ALL_USERS.to_string(),
        supported: result.supported,
        population: drop.scenario.users.len(),
    }];
    if !drop.class_of.is_empty() {
        for (c, &class_value) in spec.classes.iter().enumerate() {
            let members = drop
                .class_of
                .iter()
                .enumerate()
                .filter(|(_, cls)| **cls == c);
            let (population, supported) = members.fold((0, 0), |(p, s), (k, _)| {
                (p + 1, s + usize::from(result.utilities[k]))
            });
            out.push(DropOutcome {
                drop: drop_idx,
                method,
                value,
                class: class_label(class_value),
                supported,
                population,
            });
        }
    }
    out
}

fn run_drop(
    spec: &SweepSpec,
    model: &PsnrModel,
    methods: &[Method],
    drop_idx: usize,
) -> Result<Vec<DropOutcome>, SweepError> {
    let (scenario_seed, pairing_seed) = drop_seeds(spec.master_seed, drop_idx);
    let backend = spec.backend.backend();
    let mut out = Vec::new();
    let mut run_point = |drop: &Drop, matrices: &Matrices, value: f64, budget: f64| {
        for &method in methods {
            let result = allocate(
                method,
                &drop.scenario,
                model,
                matrices.for_method(method),
                budget,
                pairing_seed,
                spec.uniform_share,
                backend,
            )?;
            out.extend(outcomes_for(spec, drop, drop_idx, method, value, &result));
        }
        Ok::<_, SweepError>(())
    };

    if spec.swept_var == SweptVariable::UserCount {
        for &value in &spec.values {
            let drop = make_drop(spec, scenario_seed, value as usize)?;
            let matrices = Matrices::build(&drop.scenario, model, methods)?;
            run_point(&drop, &matrices, value, spec.base.bs_power_budget_w)?;
        }
    } else {
        // one drop, many budgets: the matrices do not depend on the budget
        let drop = make_drop(spec, scenario_seed, spec.base.num_users)?;
        let matrices = Matrices::build(&drop.scenario, model, methods)?;
        for &value in &spec.values {
            run_point(&drop, &matrices, value, value)?;
        }
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every drop (in parallel) and aggregates per method, value and class.
pub fn run_sweep(spec: &SweepSpec, model: &PsnrModel) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let methods = spec.parsed_methods()?;
    let per_drop: Vec<Vec<DropOutcome>> = (0..spec.num_drops)
        .into_par_iter()
        .map(|d| run_drop(spec, model, &methods, d))
        .collect::<Result<_, _>>()?;
    let outcomes: Vec<DropOutcome> = per_drop.into_iter().flatten().collect();

    let mut labels = vec![ALL_USERS.to_string()];
    if matches!(
        spec.swept_var,
        SweptVariable::DelayClasses | SweptVariable::PsnrClasses
    ) {
        labels.extend(spec.classes.iter().map(|c| class_label(*c)));
    }

    let mut rows = Vec::new();
    for &method in &methods {
        for &value in &spec.values {
            for label in &labels {
                let cell: Vec<&DropOutcome> = outcomes
                    .iter()
                    .filter(|o| o.method == method && o.value == value && &o.class == label)
                    .collect();
                let supported: Vec<f64> = cell.iter().map(|o| o.supported as f64).collect();
                let ratios: Vec<f64> = cell
                    .iter()
                    .filter(|o| o.population > 0)
                    .map(|o| o.supported as f64 / o.population as f64)
                    .collect();
                let (mean_supported, std_supported) = mean_std(&supported);
                let (mean_access_ratio, _) = mean_std(&ratios);
                rows.push(SweepRow {
                    method: method.to_string(),
                    swept_var: spec.swept_var.name().to_string(),
                    swept_value: value,
                    class: label.clone(),
                    mean_supported,
                    mean_access_ratio,
                    std_supported,
                    num_drops: ratios.len(),
                });
            }
        }
    }
    Ok(SweepResult { rows, outcomes })
}

/// Class sweep over delay bounds; `spec.swept_var` must be `DelayClasses`.
pub fn class_sweep_delay(spec: &SweepSpec, model: &PsnrModel) -> Result<SweepResult, SweepError> {
    if spec.swept_var != SweptVariable::DelayClasses {
        return Err(SweepError::Spec(
            "expected swept_var = delay_classes".into(),
        ));
    }
    run_sweep(spec, model)
}

/// Class sweep over PSNR floors; `spec.swept_var` must be `PsnrClasses`.
pub fn class_sweep_psnr(spec: &SweepSpec, model: &PsnrModel) -> Result<SweepResult, SweepError> {
    if spec.swept_var != SweptVariable::PsnrClasses {
        return Err(SweepError::Spec("expected swept_var = psnr_classes".into()));
    }
    run_sweep(spec, model)
}

/// `x` with 15 significant digits.
pub fn format_sig15(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.14e}")
    }
}

/// Writes the aggregated table. Column order is fixed by [`CSV_HEADER`].
pub fn emit_csv<W: io::Write>(result: &SweepResult, mut sink: W) -> Result<(), SweepError> {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.swept_var,
            format_sig15(r.swept_value),
            r.class,
            format_sig15(r.mean_supported),
            format_sig15(r.mean_access_ratio),
            format_sig15(r.std_supported),
            r.num_drops
        )
        .expect("string write");
    }
    sink.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads rows written by [`emit_csv`].
pub fn parse_csv<R: io::Read>(reader: R) -> Result<Vec<SweepRow>, SweepError> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e: csv::Error| SweepError::Spec(format!("bad sweep csv: {e}")))
}
