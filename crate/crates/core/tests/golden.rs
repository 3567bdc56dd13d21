mod common;

use std::fs;

use common::{fixture, rel_err, synthetic};
use jscc_alloc::capacity::{brute_force_p1, snr_grid, solve_capacity, CapacityOptions};
use jscc_alloc::experiments::SweepSpec;
use jscc_alloc::{build_power_matrix, P2Options, PsnrModel, Scenario, SystemConfig};
use serde_json::{json, Value};

const GOLDEN_TOL: f64 = 1e-9;

fn golden() -> Value {
    serde_json::from_str(&fs::read_to_string(fixture("tiny_golden.json")).unwrap()).unwrap()
}

#[test]
fn synthetic_table_fixture_matches_builtin() {
    let loaded = PsnrModel::load(fixture("psnr_synthetic.csv")).unwrap();
    assert_eq!(loaded, PsnrModel::synthetic());
}

#[test]
fn default_config_fixture_matches_builtin() {
    let doc = fs::read_to_string(fixture("default_config.json")).unwrap();
    let cfg: SystemConfig = serde_json::from_str(&doc).unwrap();
    assert_eq!(cfg, SystemConfig::default());
}

#[test]
fn tiny_scenario_reproduces_golden_allocation() {
    let scenario = Scenario::load(fixture("tiny_scenario.json")).unwrap();
    let g = golden();
    let (result, _) = solve_capacity(&scenario, &synthetic(), &CapacityOptions::default()).unwrap();
    assert_eq!(result.supported as u64, g["J_star"].as_u64().unwrap());
    let power = g["total_power_w"].as_f64().unwrap();
    assert!(rel_err(result.total_power_w, power) < GOLDEN_TOL);
    let pairs: Vec<(usize, usize)> = serde_json::from_value(g["pairs"].clone()).unwrap();
    assert_eq!(result.assignment.pairs(), pairs.as_slice());
}

#[test]
fn tiny_scenario_golden_agrees_with_brute_force() {
    let scenario = Scenario::load(fixture("tiny_scenario.json")).unwrap();
    let bf = brute_force_p1(&scenario, &synthetic(), &snr_grid(0.0, 20.0, 0.25)).unwrap();
    assert_eq!(bf.supported as u64, golden()["J_star"].as_u64().unwrap());
}

#[test]
fn sweep_fixtures_parse() {
    for name in [
        "power",
        "fixed_cr",
        "delay_classes",
        "psnr_classes",
        "user_count",
    ] {
        let doc = fs::read_to_string(fixture(&format!("sweeps/{name}.json"))).unwrap();
        SweepSpec::from_json(&doc).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

/// Rewrites every fixture from the built-in defaults. Run with
/// `cargo test -p jscc-alloc --test golden -- --ignored` after an
/// intentional model or generator change.
#[test]
#[ignore]
fn regenerate_fixtures() {
    let model = synthetic();
    model.save(fixture("psnr_synthetic.csv")).unwrap();
    fs::write(
        fixture("default_config.json"),
        serde_json::to_string_pretty(&SystemConfig::default()).unwrap(),
    )
    .unwrap();

    let cfg = SystemConfig {
        num_users: 4,
        num_rbs: 4,
        num_subchannels: 12,
        rng_seed: 7,
        ..SystemConfig::default()
    };
    let scenario = jscc_alloc::generate_scenario(&cfg).unwrap();
    // budget halfway between the cheapest 2- and 3-user allocations
    let matrix = build_power_matrix(&scenario, &model, &P2Options::default()).unwrap();
    let costs = matrix.cost_matrix();
    let p2 = jscc_alloc::assign::solve_k_assignment_flow(&costs, 2)
        .unwrap()
        .cost;
    let p3 = jscc_alloc::assign::solve_k_assignment_flow(&costs, 3)
        .unwrap()
        .cost;
    let scenario = scenario.with_budget(0.5 * (p2 + p3));
    scenario.save(fixture("tiny_scenario.json")).unwrap();

    let (result, _) = solve_capacity(&scenario, &model, &CapacityOptions::default()).unwrap();
    let bf = brute_force_p1(&scenario, &model, &snr_grid(0.0, 20.0, 0.25)).unwrap();
    assert_eq!(bf.supported, result.supported);
    let doc = json!({
        "J_star": result.supported,
        "total_power_w": result.total_power_w,
        "pairs": result.assignment.pairs(),
    });
    fs::write(
        fixture("tiny_golden.json"),
        serde_json::to_string_pretty(&doc).unwrap(),
    )
    .unwrap();

    let specs = [
        ("power", SweepSpec::power_sweep(100, 2024)),
        ("fixed_cr", {
            let mut s = SweepSpec::fixed_cr_sweep(100, 2024);
            s.base.psnr_bound_range_db = [23.0, 25.0];
            s
        }),
        ("delay_classes", SweepSpec::delay_class_sweep(100, 2024)),
        ("psnr_classes", SweepSpec::psnr_class_sweep(100, 2024)),
        ("user_count", {
            let mut s = SweepSpec::power_sweep(100, 2024);
            s.swept_var = jscc_alloc::SweptVariable::UserCount;
            s.values = vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
            s.base.bs_power_budget_w = 0.1;
            s
        }),
    ];
    for (name, spec) in specs {
        fs::write(
            fixture(&format!("sweeps/{name}.json")),
            serde_json::to_string_pretty(&spec).unwrap(),
        )
        .unwrap();
    }
}
