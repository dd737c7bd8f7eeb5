//! Outer LIPAL loop: perturbed dual blend, regularized prox-linear primal
//! step with β backtracking against the descent property, perturbed dual
//! ascent, and the ε-KKT stopping test.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::config::{SolverConfig, Variant};
use crate::diagnostics::{lyapunov_value, TraceRow};
use crate::error::{Error, Result};
use crate::inner::{solve_subproblem, InnerStats, SubproblemSpec};
use crate::problem::{kkt_residual, KktResidual, ProblemOracle};
use crate::vecops::{add_scaled, dot, ensure_dim, ensure_finite, norm, norm_diff};

/// Full primal/dual iterate with the cached oracle evaluations the outer
/// loop needs between steps.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_prev: Vec<f64>,
    /// Subgradient certificate from the most recent prox at (or near) x.
    pub certificate: Vec<f64>,
    pub f_x: f64,
    pub g_x: f64,
    pub constraints_x: Vec<f64>,
    pub beta_current: f64,
}

/// One accepted outer step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: IterateState,
    pub kkt: KktResidual,
    /// LHS - RHS of the descent test L(x,y) - L(x⁺,y) ≥ (β/4)‖Δx‖².
    pub descent_gap: f64,
    pub al_reference: f64,
    pub beta_doublings: usize,
    pub inner: InnerStats,
    /// Lyapunov value 𝒫ₖ₊₁ at the new triple (x⁺, y⁺, yᵏ).
    pub lyapunov_next: f64,
}

/// Per-run summary; `trace` is populated when requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub converged: bool,
    pub outer_iterations: usize,
    pub total_inner_iterations: usize,
    pub f: f64,
    pub g: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    pub beta_final: f64,
    /// Observed sup of ‖∇f(xᵏ)‖ along the run (feeds the stage-count bound).
    pub max_grad_norm: f64,
    pub wall_ms: f64,
    #[serde(skip)]
    pub x: Vec<f64>,
    #[serde(skip)]
    pub y: Vec<f64>,
    #[serde(skip)]
    pub certificate: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceRow>>,
}

/// y_τ = τ y⁰ + (1 - τ) y.
pub fn perturbed_dual_blend(y0: &[f64], y: &[f64], tau: f64) -> Vec<f64> {
    y0.iter()
        .zip(y)
        .map(|(a, b)| tau * a + (1.0 - tau) * b)
        .collect()
}

/// Perturbed ascent: y⁺ = y_τ + ρ F(x⁺).
pub fn dual_update(y_tau: &[f64], rho: f64, constraints_next: &[f64]) -> Vec<f64> {
    add_scaled(y_tau, rho, constraints_next)
}

/// Perturbed augmented Lagrangian
/// L(x, y; y⁰) = f(x) + g(x) + ⟨τy⁰ + (1-τ)y, F(x)⟩ + (ρ/2)‖F(x)‖².
pub fn perturbed_al_value(
    oracle: &dyn ProblemOracle,
    x: &[f64],
    y: &[f64],
    y0: &[f64],
    tau: f64,
    rho: f64,
) -> Result<f64> {
    let g = oracle.g_value(x);
    if !g.is_finite() {
        return Err(Error::invalid("perturbed_al_value: x outside dom g"));
    }
    let f = oracle.constraints(x);
    ensure_finite(&f, "constraints")?;
    let y_tau = perturbed_dual_blend(y0, y, tau);
    Ok(oracle.smooth_value(x) + g + dot(&y_tau, &f) + 0.5 * rho * dot(&f, &f))
}

/// Same value given the already-blended dual (both sides of the descent test
/// share one blend).
fn al_value_blended(
    oracle: &dyn ProblemOracle,
    x: &[f64],
    y_tau: &[f64],
    rho: f64,
) -> Result<f64> {
    let g = oracle.g_value(x);
    if !g.is_finite() {
        return Err(Error::invalid("augmented Lagrangian: x outside dom g"));
    }
    let f = oracle.constraints(x);
    ensure_finite(&f, "constraints")?;
    Ok(oracle.smooth_value(x) + g + dot(y_tau, &f) + 0.5 * rho * dot(&f, &f))
}

pub struct BacktrackOutcome {
    pub x_plus: Vec<f64>,
    pub certificate: Vec<f64>,
    pub beta_used: f64,
    pub doublings: usize,
    pub inner: InnerStats,
    pub descent_gap: f64,
    /// |L(xᵏ, yᵏ)| used as the relative scale in the descent test.
    pub al_reference: f64,
    /// F(x⁺), already evaluated for the measure test; reused downstream.
    pub constraints_next: Vec<f64>,
    /// yᵏ⁺¹ = y_τ + ρF(x⁺), likewise reused.
    pub y_next: Vec<f64>,
    /// KKT residuals at (x⁺, y⁺) with the subproblem certificate.
    pub kkt: KktResidual,
    /// Lyapunov value at (x⁺, y⁺, yᵏ), reused by the trace.
    pub lyapunov_next: f64,
}

const MAX_BETA_DOUBLINGS: usize = 60;
const DESCENT_REL_TOL: f64 = 1e-10;

/// Solve the primal subproblem, doubling β until the accepted step passes all
/// three per-iteration certificates the analysis hangs on:
///  1. descent, L(xᵏ, yᵏ) - L(xᵏ⁺¹, yᵏ) ≥ (β/4)‖Δx‖²;
///  2. the optimality-measure bound, stat(x⁺,y⁺) ≤ 2β‖Δx‖ + eps_sub(1+‖Δx‖);
///  3. Lyapunov decrease (when `lyapunov_prev` carries 𝒫ₖ, i.e. k ≥ 1),
///     𝒫ₖ₊₁ - 𝒫ₖ ≤ -(β/8)‖Δx‖² - (τ(1-τ)/2ρ)‖Δy‖².
/// All three hold once β clears the local smoothness level, and each failing
/// test cheapens as β grows: ‖Δx‖ scales like residual/β, and at ‖Δx‖ → 0 the
/// dual decrement contracts exactly by (1-τ), which makes the Lyapunov
/// dual-movement term strictly decreasing.
pub fn backtrack_beta(
    oracle: &dyn ProblemOracle,
    x_k: &[f64],
    y_k: &[f64],
    y0: &[f64],
    y_tau: &[f64],
    beta_start: f64,
    lyapunov_prev: Option<f64>,
    config: &SolverConfig,
) -> Result<BacktrackOutcome> {
    let al_before = al_value_blended(oracle, x_k, y_tau, config.rho)?;
    let tol = DESCENT_REL_TOL * (1.0 + al_before.abs());
    let mut beta = beta_start;
    for doublings in 0..=MAX_BETA_DOUBLINGS {
        let (x_plus, certificate, inner) = match config.variant {
            Variant::GaussNewton => {
                let spec = SubproblemSpec::at(oracle, x_k, y_tau, config.rho, beta);
                solve_subproblem(&spec, x_k, config.eps_sub, config.max_inner)?
            }
            Variant::ProxGradient => prox_gradient_step(oracle, x_k, y_tau, config.rho, beta)?,
        };
        let al_after = al_value_blended(oracle, &x_plus, y_tau, config.rho)?;
        let dx2 = {
            let d = norm_diff(&x_plus, x_k);
            d * d
        };
        let gap = (al_before - al_after) - 0.25 * beta * dx2;
        if gap >= -tol {
            let constraints_next = oracle.constraints(&x_plus);
            ensure_finite(&constraints_next, "constraints")?;
            let y_next = dual_update(y_tau, config.rho, &constraints_next);
            ensure_finite(&y_next, "dual iterate")?;
            let kkt = kkt_residual(oracle, &x_plus, &y_next, &certificate)?;
            let dx = dx2.sqrt();
            let measure_bound = 2.0 * beta * dx + config.eps_sub * (1.0 + dx);
            let measure_ok =
                kkt.stationarity <= measure_bound + 1e-10 * (1.0 + measure_bound);
            let lyapunov_next = lyapunov_value(
                oracle,
                &x_plus,
                &y_next,
                y_k,
                y0,
                config.tau,
                config.rho,
            )?;
            // Lyapunov decrease is logged, not enforced: its premise asks for
            // β ≥ 8(1-τ)ρM_F²/τ², and forcing that at small τ pins the run in
            // a dual-drift regime needing ~1/τ iterations. A violation here
            // is the observable sign that β sits below that threshold.
            if let Some(p_k) = lyapunov_prev {
                let dy = norm_diff(&y_next, y_k);
                let rhs = -0.125 * beta * dx2
                    - config.tau * (1.0 - config.tau) / (2.0 * config.rho) * dy * dy;
                if lyapunov_next - p_k > rhs + 1e-8 * (1.0 + p_k.abs()) {
                    debug!(
                        "Lyapunov decrease violated at beta={beta}: dP={:.3e} > {:.3e}",
                        lyapunov_next - p_k,
                        rhs
                    );
                }
            }
            if measure_ok {
                return Ok(BacktrackOutcome {
                    x_plus,
                    certificate,
                    beta_used: beta,
                    doublings,
                    inner,
                    descent_gap: gap,
                    al_reference: al_before.abs(),
                    constraints_next,
                    y_next,
                    kkt,
                    lyapunov_next,
                });
            }
            debug!(
                "measure test failed at beta={beta}: stat={} > {measure_bound}; doubling",
                kkt.stationarity
            );
        } else {
            debug!("descent test failed at beta={beta}: gap={gap}; doubling");
        }
        beta *= 2.0;
    }
    Err(Error::numerical(format!(
        "descent test still failing after {MAX_BETA_DOUBLINGS} beta doublings \
         (smoothness assumption violated?)"
    )))
}

/// Proximal-gradient primal step: the whole smooth part of the perturbed
/// augmented Lagrangian is linearized at x_k and one prox step of size 1/β
/// is taken.
fn prox_gradient_step(
    oracle: &dyn ProblemOracle,
    x_k: &[f64],
    y_tau: &[f64],
    rho: f64,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>, InnerStats)> {
    let f_k = oracle.constraints(x_k);
    let v = add_scaled(y_tau, rho, &f_k);
    let jtv = oracle.jac_transpose_apply(x_k, &v);
    let grad_f = oracle.smooth_grad(x_k);
    let grad_psi = add_scaled(&grad_f, 1.0, &jtv);
    ensure_finite(&grad_psi, "perturbed AL gradient")?;
    let t = 1.0 / beta;
    let u = add_scaled(x_k, -t, &grad_psi);
    let (p, cert) = oracle.prox_g(&u, t)?;
    let dx = norm_diff(&p, x_k);
    let stats = InnerStats {
        iterations: 1,
        grad_map_norm: beta * dx,
        l_sub: beta,
        objective: f64::NAN,
        converged: true,
        subgrad_norm: beta * dx,
        implied_alpha: if dx > 0.0 { beta } else { 0.0 },
    };
    Ok((p, cert, stats))
}

/// One full outer iteration at the current state.
pub fn lipal_step(
    oracle: &dyn ProblemOracle,
    state: &IterateState,
    y0: &[f64],
    lyapunov_prev: Option<f64>,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    let y_tau = perturbed_dual_blend(y0, &state.y, config.tau);
    let bt = backtrack_beta(
        oracle,
        &state.x,
        &state.y,
        y0,
        &y_tau,
        state.beta_current,
        lyapunov_prev,
        config,
    )?;
    let constraints_next = bt.constraints_next;
    let y_next = bt.y_next;
    let kkt = bt.kkt;
    let f_x = oracle.smooth_value(&bt.x_plus);
    let g_x = oracle.g_value(&bt.x_plus);

    let state_next = IterateState {
        k: state.k + 1,
        x: bt.x_plus,
        y: y_next,
        y_prev: state.y.clone(),
        certificate: bt.certificate,
        f_x,
        g_x,
        constraints_x: constraints_next,
        beta_current: bt.beta_used,
    };
    Ok(StepOutcome {
        state: state_next,
        kkt,
        descent_gap: bt.descent_gap,
        al_reference: bt.al_reference,
        beta_doublings: bt.doublings,
        inner: bt.inner,
        lyapunov_next: bt.lyapunov_next,
    })
}

/// Stationarity probe at a fresh start point: one prox-gradient step of size
/// 1 yields a certificate at the prox image p; both ‖∇f + Jᵀy + cert‖ and
/// ‖p - x‖ vanish exactly when (x, y) is stationary, so their max is the
/// reported k = 0 stationarity.
/// Fixed-point residual of the iteration at the start point: a proximal probe
/// on the penalized dual-adjusted gradient ∇f + Jᵀ(y⁰ + ρF), plus the dual
/// movement ρ‖F(x⁰)‖ the first multiplier update would make. All three pieces
/// vanish together exactly when (x⁰, y⁰) is a fixed point of the outer loop,
/// so terminating at iteration 0 cannot mask an infeasible warm start.
fn initial_probe(
    oracle: &dyn ProblemOracle,
    x0: &[f64],
    y0: &[f64],
    constraints0: &[f64],
    rho: f64,
) -> Result<(Vec<f64>, f64)> {
    let grad = oracle.smooth_grad(x0);
    ensure_finite(&grad, "smooth_grad")?;
    let shifted = add_scaled(y0, rho, constraints0);
    let jty = oracle.jac_transpose_apply(x0, &shifted);
    let dir = add_scaled(&grad, 1.0, &jty);
    let u = add_scaled(x0, -1.0, &dir);
    let (p, cert) = oracle.prox_g(&u, 1.0)?;
    let s: Vec<f64> = (0..x0.len()).map(|i| dir[i] + cert[i]).collect();
    let stat = norm(&s)
        .max(norm_diff(&p, x0))
        .max(rho * norm(constraints0));
    Ok((cert, stat))
}

/// Run Algorithm LIPAL from (x0, y0) until both ε-KKT residuals are within
/// tolerance or `max_outer` is reached.
pub fn run_lipal(
    oracle: &dyn ProblemOracle,
    x0: &[f64],
    y0: &[f64],
    config: &SolverConfig,
    with_trace: bool,
) -> Result<RunReport> {
    config.validate()?;
    let n = oracle.dim_primal();
    let m = oracle.dim_constraints();
    ensure_dim(x0, n, "x0")?;
    ensure_dim(y0, m, "y0")?;
    ensure_finite(x0, "x0")?;
    ensure_finite(y0, "y0")?;
    if !oracle.g_value(x0).is_finite() {
        return Err(Error::invalid("x0 outside dom g"));
    }

    let start = Instant::now();
    let constraints0 = oracle.constraints(x0);
    ensure_finite(&constraints0, "constraints")?;
    let feas0 = norm(&constraints0);
    let budget = 1.0f64.min(config.c0 / config.rho);
    if feas0 * feas0 > budget + 1e-15 {
        warn!(
            "initialization budget violated: ||F(x0)||^2 = {:.3e} > {budget:.3e}",
            feas0 * feas0
        );
    }

    let (cert0, stat0) = initial_probe(oracle, x0, y0, &constraints0, config.rho)?;
    let mut state = IterateState {
        k: 0,
        x: x0.to_vec(),
        y: y0.to_vec(),
        y_prev: y0.to_vec(),
        certificate: cert0,
        f_x: oracle.smooth_value(x0),
        g_x: oracle.g_value(x0),
        constraints_x: constraints0,
        beta_current: config.beta0,
    };
    let mut kkt = KktResidual {
        stationarity: stat0,
        feasibility: feas0,
    };

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut total_inner = 0usize;
    let mut max_grad_norm = norm(&oracle.smooth_grad(x0));
    let mut converged = false;

    if with_trace {
        trace.push(TraceRow {
            k: 0,
            f: state.f_x,
            g: state.g_x,
            feas: kkt.feasibility,
            stat: kkt.stationarity,
            beta: state.beta_current,
            inner_iters: 0,
            lyapunov: f64::NAN,
            dx_norm: 0.0,
            dy_norm: 0.0,
            ms: 0.0,
            y_anchor_dist: norm_diff(&state.y, y0),
            descent_slack: f64::NAN,
            al_ref: f64::NAN,
        });
    }

    // dual movement ‖yᵏ - yᵏ⁻¹‖; zero at k = 0, where the probe's ρ‖F(x⁰)‖
    // term already rules out exits with the multipliers about to move
    let mut last_dy = 0.0f64;
    // 𝒫ₖ, defined from k = 1 on; None for the first step, then carried so the
    // backtracking line search can also certify the Lyapunov decrease
    let mut lyapunov_prev: Option<f64> = None;
    loop {
        if kkt.within(config.eps_stat, config.eps_feas) && last_dy <= config.eps_dual {
            converged = true;
            break;
        }
        if state.k >= config.max_outer {
            break;
        }
        let step = lipal_step(oracle, &state, y0, lyapunov_prev, config)?;
        lyapunov_prev = Some(step.lyapunov_next);
        total_inner += step.inner.iterations.max(1);
        let dx = norm_diff(&step.state.x, &state.x);
        let dy = norm_diff(&step.state.y, &state.y);
        last_dy = dy;
        state = step.state;
        kkt = step.kkt;
        max_grad_norm = max_grad_norm.max(norm(&oracle.smooth_grad(&state.x)));
        if with_trace {
            let lyap = step.lyapunov_next;
            trace.push(TraceRow {
                k: state.k,
                f: state.f_x,
                g: state.g_x,
                feas: kkt.feasibility,
                stat: kkt.stationarity,
                beta: state.beta_current,
                inner_iters: step.inner.iterations,
                lyapunov: lyap,
                dx_norm: dx,
                dy_norm: dy,
                ms: start.elapsed().as_secs_f64() * 1e3,
                y_anchor_dist: norm_diff(&state.y, y0),
                descent_slack: step.descent_gap,
                al_ref: step.al_reference,
            });
        }
        debug!(
            "k={} f={:.6e} feas={:.3e} stat={:.3e} beta={:.3e} inner={}",
            state.k, state.f_x, kkt.feasibility, kkt.stationarity, state.beta_current,
            step.inner.iterations
        );
    }

    Ok(RunReport {
        converged,
        outer_iterations: state.k,
        total_inner_iterations: total_inner,
        f: state.f_x,
        g: state.g_x,
        feasibility: kkt.feasibility,
        stationarity: kkt.stationarity,
        beta_final: state.beta_current,
        max_grad_norm,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        x: state.x,
        y: state.y,
        certificate: state.certificate,
        trace: if with_trace { Some(trace) } else { None },
    })
}
