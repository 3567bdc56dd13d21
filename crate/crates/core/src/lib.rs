//! Downlink resource allocation for semantic (JSCC) image transmission:
//! RB assignment, compression-ratio selection and power control that
//! maximize the number of users meeting their delay and PSNR requirements.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod baselines;
pub mod capacity;
pub mod experiments;
pub mod power_min;
pub mod psnr_model;
pub mod ratio;
pub mod scenario;

pub use assign::{Assignment, Backend, CostMatrix, LpOptions, SolverError};
pub use baselines::{Method, UniformShare};
pub use capacity::{
    brute_force_p1, solve_capacity, AllocError, AllocationResult, CapacityOptions, UserAllocation,
};
pub use experiments::{run_sweep, SweepResult, SweepRow, SweepSpec, SweptVariable};
pub use power_min::{build_power_matrix, CrPolicy, Infeasibility, P2Options, PowerMatrix};
pub use psnr_model::{MinSnr, ModelError, PsnrModel};
pub use ratio::CompressionRatio;
pub use scenario::{generate_scenario, Scenario, ScenarioError, SystemConfig, User};
