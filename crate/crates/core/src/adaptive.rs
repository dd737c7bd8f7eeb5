//! Staged LIPAL with trial penalty values: ρ grows by δ₁ and τ shrinks by δ₂
//! each stage until the output of a stage is feasible.

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::problem::ProblemOracle;
use crate::solver::{run_lipal, RunReport};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub rho: f64,
    pub tau: f64,
    pub report: RunReport,
    pub feasible_at_exit: bool,
}

/// Run LIPAL stages with ρ_s = ρ₀ δ₁ˢ, τ_s = τ₀ δ₂ˢ. Within a stage the loop
/// terminates on stationarity only; feasibility is checked at stage
/// boundaries. Warm starts carry the exact terminal iterate forward.
pub fn run_adaptive(
    oracle: &dyn ProblemOracle,
    x0: &[f64],
    y0: &[f64],
    config: &SolverConfig,
    with_trace: bool,
) -> Result<(RunReport, Vec<StageRecord>)> {
    config.validate()?;
    if config.max_stages < 1 {
        return Err(Error::invalid("max_stages must be at least 1"));
    }
    let mut stages = Vec::new();
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    for s in 0..config.max_stages {
        let rho_s = config.rho * config.delta1.powi(s as i32);
        let tau_s = (config.tau * config.delta2.powi(s as i32)).min(1.0);
        let stage_config = SolverConfig {
            rho: rho_s,
            tau: tau_s,
            beta0: config.beta0, // beta resets: the old beta's relation to the threshold is void
            eps_feas: f64::INFINITY,
            // a stage may only exit once the multiplier sequence has settled;
            // otherwise its output carries no feasibility guarantee and the
            // geometric stage-count argument breaks down
            eps_dual: tau_s * (1.0 + crate::vecops::norm(&y)),
            ..config.clone()
        };
        let report = run_lipal(oracle, &x, &y, &stage_config, with_trace)?;
        let feasible = report.feasibility <= config.eps_feas;
        info!(
            "stage {s}: rho={rho_s:.3e} tau={tau_s:.3e} iters={} feas={:.3e} stat={:.3e}",
            report.outer_iterations, report.feasibility, report.stationarity
        );
        x = report.x.clone();
        y = report.y.clone();
        let stalled = !report.converged;
        stages.push(StageRecord {
            stage: s,
            rho: rho_s,
            tau: tau_s,
            report,
            feasible_at_exit: feasible,
        });
        if feasible && !stalled {
            break;
        }
    }
    let last = stages.last().expect("at least one stage");
    let mut final_report = last.report.clone();
    final_report.converged = last.feasible_at_exit && last.report.converged;
    final_report.outer_iterations = stages.iter().map(|s| s.report.outer_iterations).sum();
    final_report.total_inner_iterations =
        stages.iter().map(|s| s.report.total_inner_iterations).sum();
    final_report.wall_ms = stages.iter().map(|s| s.report.wall_ms).sum();
    Ok((final_report, stages))
}
