//! Linearized perturbed augmented Lagrangian solver for nonsmooth,
//! nonconvex problems with nonlinear equality constraints, plus a
//! Burer-Monteiro clustering application built on the same oracle API.
//!
//! Layout:
//! - [`problem`]: the oracle trait, KKT residuals, and derivative checkers
//! - [`prox`]: proximal operators and projections with certificates
//! - [`inner`]: accelerated proximal-gradient subproblem solver
//! - [`solver`]: the outer loop (blended dual, descent backtracking)
//! - [`adaptive`]: staged penalty/perturbation schedules
//! - [`diagnostics`]: trace capture, Lyapunov / dual-bound / regularity checks
//! - [`mssc`]: clustering instances, data generation, label metrics
//! - [`toy`]: tiny closed-form problems for validation

pub mod adaptive;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod inner;
pub mod mssc;
pub mod problem;
pub mod prox;
pub mod solver;
pub mod toy;
pub mod vecops;

pub use adaptive::{run_adaptive, StageRecord};
pub use config::{SolverConfig, Variant};
pub use diagnostics::{
    check_dual_bound, check_lyapunov_decrease, estimate_sigma, lyapunov_value, read_trace,
    write_trace, ConeProjector, SigmaEstimate, TraceRow,
};
pub use error::{Error, Result};
pub use inner::{solve_subproblem, InnerStats, SubproblemSpec};
pub use mssc::{
    adjusted_rand_index, build_mssc_instance, extract_labels, feasible_init, load_csv,
    synth_balls, MsscInstance, MsscOracle,
};
pub use problem::{
    assert_adjoint, check_gradient_fd, check_jacobian_fd, check_prox_certificate, kkt_residual,
    KktResidual, ProblemOracle,
};
pub use prox::{project_nonneg_ball, ProxKind};
pub use solver::{run_lipal, IterateState, RunReport, StepOutcome};
pub use toy::ToyQp;
