//! Sectional solver and verification suite for self-similar profiles of the
//! collision-induced breakage equation
//!
//! ```text
//! du/dt = N(u),  N(u)(x) = int int f(x, y, z) Psi(y, z) u(y) u(z) / 2 - u(x) int Psi(x, y) u(y) dy
//! ```
//!
//! with product kernels `Psi(x, y) = x^l1 y^l2 + x^l2 y^l1` and daughter
//! densities built from a profile `beta` on (0, 1). Self-similar profiles are
//! obtained by marching the equation in scaling variables to a steady state.

pub mod error;
pub mod field;
pub mod grid;
pub mod kernels;
pub mod operator;
pub mod quadrature;
pub mod reference;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use field::DensityField;
pub use grid::{make_geometric_grid, Grid, GridSpec};
pub use kernels::{eval_kernel, BreakageConfig, BreakageKind, BreakageLaw, CollisionKernel, KernelParams};
pub use operator::{
    apply_collision_operator, apply_rescaled_operator, brute_force_operator, build_redistribution, compare_with_oracle,
    CollisionOperator, CollisionTerms, OracleReport, RedistributionTable,
};
pub use solver::{
    from_rescaled, mean_size, run_to_stationarity, self_similar_distance, simulate_physical, step_physical,
    step_rescaled, to_rescaled, EvolutionState, History, Mode, SolverConfig, StationaryResult, Stepper,
};
pub use verify::{Check, CheckKind, ProfileFunctionals, Status, Tolerances, VerificationReport};
