//! Solver tunables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which primal step the outer loop takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Prox-linear (Gauss-Newton) step: f and F linearized, the quadratic
    /// penalty of the linearized constraints kept exact.
    GaussNewton,
    /// Single proximal-gradient step on the whole smooth part.
    ProxGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Perturbation parameter τ ∈ (0, 1]; τ = 1 is the quadratic penalty limit.
    pub tau: f64,
    /// Penalty parameter ρ > 0.
    pub rho: f64,
    /// Initial regularization β₀ > 0; backtracking only ever increases it.
    pub beta0: f64,
    /// Stationarity tolerance ε₁.
    pub eps_stat: f64,
    /// Feasibility tolerance ε₂.
    pub eps_feas: f64,
    /// Inner gradient-mapping tolerance.
    pub eps_sub: f64,
    /// Dual-movement tolerance: convergence additionally requires
    /// ‖yᵏ - yᵏ⁻¹‖ below this. Infinite (disabled) by default; the staged
    /// outer loop sets it to τ_s(1 + ‖y⁰_s‖) so a stage cannot exit while
    /// the multipliers are still in flight.
    #[serde(default = "default_eps_dual", skip_serializing_if = "is_infinite")]
    pub eps_dual: f64,
    /// Inexactness reference constant α; recorded against the implied
    /// ‖s‖/‖Δx‖ ratio, never enforced.
    pub alpha_inexact: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Stage multiplier for ρ, δ₁ > 1.
    pub delta1: f64,
    /// Stage multiplier for τ, δ₂ ∈ (0, 1).
    pub delta2: f64,
    pub max_stages: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Initialization budget c₀ ≥ 0 in the ‖F(x⁰)‖² ≤ min{1, c₀/ρ} check.
    pub c0: f64,
    /// Reference penalty ρ₀ ≥ 0 under which the level sets are compact.
    pub rho0: f64,
}

fn default_eps_dual() -> f64 {
    f64::INFINITY
}

fn is_infinite(v: &f64) -> bool {
    v.is_infinite()
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tau: 1e-3,
            rho: 10.0,
            beta0: 1.0,
            eps_stat: 1e-1,
            eps_feas: 1e-3,
            eps_sub: 1e-3,
            eps_dual: f64::INFINITY,
            alpha_inexact: 0.0,
            max_outer: 1000,
            max_inner: 20_000,
            delta1: 10.0,
            delta2: 0.5,
            max_stages: 20,
            seed: 0,
            variant: Variant::GaussNewton,
            c0: 0.0,
            rho0: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must be in (0,1], got {}", self.tau)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.beta0 > 0.0) {
            return Err(Error::invalid(format!("beta0 must be positive, got {}", self.beta0)));
        }
        for (name, v) in [
            ("eps_stat", self.eps_stat),
            ("eps_feas", self.eps_feas),
            ("eps_sub", self.eps_sub),
            ("eps_dual", self.eps_dual),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.alpha_inexact < 0.0 {
            return Err(Error::invalid("alpha_inexact must be nonnegative"));
        }
        if !(self.delta1 > 1.0) {
            return Err(Error::invalid(format!("delta1 must exceed 1, got {}", self.delta1)));
        }
        if !(self.delta2 > 0.0 && self.delta2 < 1.0) {
            return Err(Error::invalid(format!("delta2 must be in (0,1), got {}", self.delta2)));
        }
        if self.c0 < 0.0 || self.rho0 < 0.0 {
            return Err(Error::invalid("c0 and rho0 must be nonnegative"));
        }
        Ok(())
    }
}
