use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use jscc_alloc::baselines::{self, Method, UniformShare};
use jscc_alloc::capacity::{solve_capacity_with_matrix, AllocationResult};
use jscc_alloc::experiments::{self, SweepSpec, SweptVariable};
use jscc_alloc::power_min::{build_power_matrix, CrPolicy, P2Options};
use jscc_alloc::{Backend, LpOptions, PsnrModel, Scenario, SystemConfig};

#[derive(Parser)]
#[command(
    name = "jscc-alloc",
    version,
    about = "Downlink RB, compression-ratio and power allocation for JSCC users"
)]
struct Cli {
    /// Worker threads for parallel stages (defaults to one per core).
    #[arg(long, global = true, env = "JSCC_ALLOC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a scenario (user positions, channels, requirements).
    Generate {
        /// System config JSON; omitted fields take reference defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocate one scenario and print `J*=<n> power=<w>`.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        /// PSNR table CSV (`cr,snr_db,psnr_db`); the built-in synthetic table if omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BackendArg::Flow)]
        backend: BackendArg,
        /// optimal | hungarian | random | uniform | fixed-cr:<n/d>
        #[arg(long, default_value = "optimal")]
        method: Method,
        /// Overrides the scenario's BS power budget (W).
        #[arg(long)]
        power: Option<f64>,
        /// Pairing seed for the random and uniform methods.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ShareArg::PerUser)]
        uniform_share: ShareArg,
        /// Allocation JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-pair power matrix CSV output.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Run a Monte Carlo sweep and write the aggregated CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in synthetic PSNR table.
    Model {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Flow,
    Lp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShareArg {
    PerUser,
    PerRb,
}

fn load_model(path: Option<&Path>) -> Result<PsnrModel> {
    match path {
        Some(p) => {
            PsnrModel::load(p).with_context(|| format!("loading PSNR table {}", p.display()))
        }
        None => Ok(PsnrModel::synthetic()),
    }
}

fn generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let doc = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SystemConfig>(&doc)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => SystemConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let scenario = jscc_alloc::generate_scenario(&cfg)?;
    scenario.save(out)?;
    log::info!("wrote {} users to {}", scenario.num_users(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    scenario: &Path,
    model: Option<&Path>,
    backend: BackendArg,
    method: Method,
    power: Option<f64>,
    seed: u64,
    share: ShareArg,
    out: Option<&Path>,
    matrix_out: Option<&Path>,
) -> Result<()> {
    let mut scenario = Scenario::load(scenario)?;
    if let Some(p) = power {
        if !(p.is_finite() && p >= 0.0) {
            bail!("--power must be finite and >= 0, got {p}");
        }
        scenario = scenario.with_budget(p);
    }
    let model = load_model(model)?;
    let backend = match backend {
        BackendArg::Flow => Backend::Flow,
        BackendArg::Lp => Backend::InteriorPoint(LpOptions::default()),
    };
    let share = match share {
        ShareArg::PerUser => UniformShare::PerUser,
        ShareArg::PerRb => UniformShare::PerRb,
    };
    let policy = match method {
        Method::FixedCr(cr) => CrPolicy::Fixed(cr),
        _ => CrPolicy::Adaptive,
    };
    let opts = P2Options {
        policy,
        ..P2Options::default()
    };
    let matrix = build_power_matrix(&scenario, &model, &opts)?;
    if let Some(p) = matrix_out {
        fs::write(p, matrix.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    let budget = scenario.config.bs_power_budget_w;
    let result: AllocationResult = match method {
        Method::Optimal | Method::FixedCr(_) => {
            let (r, trace) = solve_capacity_with_matrix(
                &scenario,
                &model,
                &matrix,
                budget,
                backend,
                &method.to_string(),
            )?;
            log::info!(
                "{} inner solves, J cap {}",
                trace.inner_solves(),
                trace.j_cap
            );
            r
        }
        Method::Hungarian => baselines::hungarian_greedy_on(&scenario, &model, &matrix, budget)?,
        Method::Random => baselines::random_pairing_on(&scenario, &model, &matrix, budget, seed),
        Method::Uniform => {
            baselines::uniform_power_on(&scenario, &model, &matrix, budget, seed, share)
        }
    };
    if let Some(p) = out {
        fs::write(p, result.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    println!("J*={} power={}", result.supported, result.total_power_w);
    Ok(())
}

fn sweep(spec: &Path, model: Option<&Path>, out: &Path) -> Result<()> {
    let doc = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec =
        SweepSpec::from_json(&doc).with_context(|| format!("sweep spec {}", spec.display()))?;
    let model = load_model(model)?;
    log::info!(
        "{} sweep: {} values x {} drops x {} methods",
        spec.swept_var.name(),
        spec.values.len(),
        spec.num_drops,
        spec.methods.len()
    );
    let result = match spec.swept_var {
        SweptVariable::DelayClasses => experiments::class_sweep_delay(&spec, &model)?,
        SweptVariable::PsnrClasses => experiments::class_sweep_psnr(&spec, &model)?,
        _ => experiments::run_sweep(&spec, &model)?,
    };
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    experiments::emit_csv(&result, std::io::BufWriter::new(file))?;
    log::info!("wrote {} rows to {}", result.rows.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::Generate { config, seed, out } => generate(config.as_deref(), seed, &out),
        Command::Solve {
            scenario,
            model,
            backend,
            method,
            power,
            seed,
            uniform_share,
            out,
            matrix_out,
        } => solve(
            &scenario,
            model.as_deref(),
            backend,
            method,
            power,
            seed,
            uniform_share,
            out.as_deref(),
            matrix_out.as_deref(),
        ),
        Command::Sweep { spec, model, out } => sweep(&spec, model.as_deref(), &out),
        Command::Model { out } => {
            PsnrModel::synthetic().save(&out)?;
            Ok(())
        }
    }
}
