//! Strongly convex primal subproblem
//!
//! ```text
//! Q(x) = ℓ_f(x; x_k) + g(x) + ⟨y_τ, ℓ_F(x; x_k)⟩ + (ρ/2)‖ℓ_F(x; x_k)‖² + (β/2)‖x - x_k‖²
//! ```
//!
//! solved by accelerated proximal gradient with function-value monitoring
//! (restart on increase) and step-size backtracking. Termination is on the
//! norm of the gradient mapping.

use crate::error::{Error, Result};
use crate::problem::ProblemOracle;
use crate::vecops::{add_scaled, dot, ensure_finite, norm, norm_diff, sub};

/// Anchored subproblem data: everything frozen at the outer iterate `x_k`.
pub struct SubproblemSpec<'a> {
    pub oracle: &'a dyn ProblemOracle,
    pub x_k: Vec<f64>,
    /// τ y⁰ + (1 - τ) yᵏ
    pub y_tau: Vec<f64>,
    pub rho: f64,
    pub beta: f64,
    pub grad_f_k: Vec<f64>,
    pub f_k: f64,
    pub constraints_k: Vec<f64>,
}

impl<'a> SubproblemSpec<'a> {
    pub fn at(
        oracle: &'a dyn ProblemOracle,
        x_k: &[f64],
        y_tau: &[f64],
        rho: f64,
        beta: f64,
    ) -> Self {
        SubproblemSpec {
            oracle,
            x_k: x_k.to_vec(),
            y_tau: y_tau.to_vec(),
            rho,
            beta,
            grad_f_k: oracle.smooth_grad(x_k),
            f_k: oracle.smooth_value(x_k),
            constraints_k: oracle.constraints(x_k),
        }
    }

    /// ℓ_F(x; x_k) = F(x_k) + J_F(x_k)(x - x_k)
    fn linearized_constraints(&self, x: &[f64]) -> Vec<f64> {
        let jd = self.oracle.jac_apply(&self.x_k, &sub(x, &self.x_k));
        add_scaled(&self.constraints_k, 1.0, &jd)
    }

    /// Value of the smooth part of Q at x (everything except g).
    pub fn smooth_part_value(&self, x: &[f64]) -> f64 {
        let dx = sub(x, &self.x_k);
        let ell = self.linearized_constraints(x);
        self.f_k
            + dot(&self.grad_f_k, &dx)
            + dot(&self.y_tau, &ell)
            + 0.5 * self.rho * dot(&ell, &ell)
            + 0.5 * self.beta * dot(&dx, &dx)
    }

    /// Q(x) = smooth part + g(x).
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.smooth_part_value(x) + self.oracle.g_value(x)
    }
}

/// Gradient of the smooth part of Q:
/// ∇f(x_k) + J_F(x_k)^T (y_τ + ρ ℓ_F(x; x_k)) + β (x - x_k).
pub fn smooth_part_grad(spec: &SubproblemSpec, x: &[f64]) -> Result<Vec<f64>> {
    let dx = sub(x, &spec.x_k);
    let ell = spec.linearized_constraints(x);
    let v = add_scaled(&spec.y_tau, spec.rho, &ell);
    let jtv = spec.oracle.jac_transpose_apply(&spec.x_k, &v);
    let g: Vec<f64> = (0..x.len())
        .map(|i| spec.grad_f_k[i] + jtv[i] + spec.beta * dx[i])
        .collect();
    ensure_finite(&g, "subproblem gradient")?;
    Ok(g)
}

/// Estimate the smooth Lipschitz constant β + ρ λ_max(J^T J) by power
/// iteration on d ↦ J^T(J d). Underestimates are corrected by step
/// backtracking inside the solve.
pub fn estimate_lipschitz(spec: &SubproblemSpec) -> f64 {
    if spec.rho == 0.0 {
        return spec.beta;
    }
    let n = spec.x_k.len();
    // deterministic, mildly anisotropic start vector
    let mut d: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) / (n as f64)).collect();
    let mut lam = 0.0;
    for _ in 0..30 {
        let nd = norm(&d);
        if nd == 0.0 {
            break;
        }
        for di in &mut d {
            *di /= nd;
        }
        let jd = spec.oracle.jac_apply(&spec.x_k, &d);
        let jtjd = spec.oracle.jac_transpose_apply(&spec.x_k, &jd);
        lam = dot(&d, &jtjd);
        d = jtjd;
    }
    spec.beta + spec.rho * lam.max(0.0)
}

/// Per-solve statistics.
#[derive(Debug, Clone)]
pub struct InnerStats {
    pub iterations: usize,
    pub grad_map_norm: f64,
    pub l_sub: f64,
    pub objective: f64,
    pub converged: bool,
    /// ‖s‖ for the returned subgradient s ∈ ∂Q(x⁺).
    pub subgrad_norm: f64,
    /// Implied inexactness ratio ‖s‖ / ‖x⁺ - x_k‖ (0 when Δx = 0).
    pub implied_alpha: f64,
}

/// Accelerated proximal gradient on Q, warm-started at `warm_start`
/// (expected to be `x_k` so that Q(x⁺) ≤ Q(x_k) holds by monotonicity).
/// Terminates when the gradient mapping at step 1/L drops below `eps_sub`,
/// or at `max_inner` with the best iterate flagged not-converged.
pub fn solve_subproblem(
    spec: &SubproblemSpec,
    warm_start: &[f64],
    eps_sub: f64,
    max_inner: usize,
) -> Result<(Vec<f64>, Vec<f64>, InnerStats)> {
    let mut l_sub = estimate_lipschitz(spec).max(spec.beta);
    if !l_sub.is_finite() {
        return Err(Error::numerical("non-finite Lipschitz estimate"));
    }

    let mut x = warm_start.to_vec();
    let mut x_prev = x.clone();
    let mut q_x = spec.smooth_part_value(&x) + spec.oracle.g_value(&x);
    if !q_x.is_finite() {
        return Err(Error::invalid("warm start outside dom g"));
    }
    let mut theta: f64 = 1.0;

    let mut best_point = x.clone();
    let mut best_cert: Option<Vec<f64>> = None;
    let mut best_gm = f64::INFINITY;

    let mut iterations = 0;
    let mut converged = false;

    // One prox-gradient step from z with backtracking on L; returns the prox
    // point, its certificate, and the smooth value at the prox point.
    let step_from = |z: &[f64], l: &mut f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let grad = smooth_part_grad(spec, z)?;
        let qz = spec.smooth_part_value(z);
        loop {
            let t = 1.0 / *l;
            let u = add_scaled(z, -t, &grad);
            let (p, cert) = spec.oracle.prox_g(&u, t)?;
            let qp = spec.smooth_part_value(&p);
            let dp = sub(&p, z);
            let model = qz + dot(&grad, &dp) + 0.5 * *l * dot(&dp, &dp);
            if qp <= model + 1e-12 * (1.0 + qp.abs()) {
                return Ok((p, cert, qp));
            }
            *l *= 2.0;
            if !l.is_finite() {
                return Err(Error::numerical("step backtracking diverged"));
            }
        }
    };

    loop {
        // gradient mapping at the current iterate: a plain prox-gradient step
        let (p, cert, qp) = step_from(&x.clone(), &mut l_sub)?;
        let gm = l_sub * norm_diff(&x, &p);
        let q_p = qp + spec.oracle.g_value(&p);
        if gm < best_gm {
            best_gm = gm;
            best_point = p.clone();
            best_cert = Some(cert.clone());
        }
        if gm <= eps_sub {
            // return the prox point itself: its certificate is exact there
            best_point = p;
            best_cert = Some(cert);
            best_gm = gm;
            converged = true;
            break;
        }
        if iterations >= max_inner {
            break;
        }
        iterations += 1;

        // accelerated step from the extrapolated point
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        let z = add_scaled(&x, momentum, &sub(&x, &x_prev));
        let (cand, _, q_cand_smooth) = step_from(&z, &mut l_sub)?;
        let q_cand = q_cand_smooth + spec.oracle.g_value(&cand);

        if q_cand > q_x {
            // monotone restart: fall back to the plain step already computed,
            // which decreases Q by the backtracked descent test
            x_prev = x.clone();
            x = p;
            q_x = q_p;
            theta = 1.0;
        } else {
            x_prev = x;
            x = cand;
            q_x = q_cand;
            theta = theta_next;
        }
    }

    let cert = best_cert.expect("at least one prox step performed");
    let grad_at_ret = smooth_part_grad(spec, &best_point)?;
    let s: Vec<f64> = grad_at_ret
        .iter()
        .zip(&cert)
        .map(|(g, c)| g + c)
        .collect();
    let dx = norm_diff(&best_point, &spec.x_k);
    let subgrad_norm = norm(&s);
    let stats = InnerStats {
        iterations,
        grad_map_norm: best_gm,
        l_sub,
        objective: spec.smooth_part_value(&best_point) + spec.oracle.g_value(&best_point),
        converged,
        subgrad_norm,
        implied_alpha: if dx > 0.0 { subgrad_norm / dx } else { 0.0 },
    };
    Ok((best_point, cert, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::ProxKind;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense test oracle: f(x) = ½ xᵀHx + cᵀx with H = diag(h), F(x) = Ax - b,
    /// g given by a ProxKind.
    pub struct DenseOracle {
        pub h: Vec<f64>,
        pub c: Vec<f64>,
        pub a: Vec<Vec<f64>>, // m rows of length n
        pub b: Vec<f64>,
        pub g: ProxKind,
    }

    impl ProblemOracle for DenseOracle {
        fn dim_primal(&self) -> usize {
            self.c.len()
        }
        fn dim_constraints(&self) -> usize {
            self.b.len()
        }
        fn smooth_value(&self, x: &[f64]) -> f64 {
            x.iter()
                .enumerate()
                .map(|(i, &xi)| 0.5 * self.h[i] * xi * xi + self.c[i] * xi)
                .sum()
        }
        fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
            x.iter()
                .enumerate()
                .map(|(i, &xi)| self.h[i] * xi + self.c[i])
                .collect()
        }
        fn constraints(&self, x: &[f64]) -> Vec<f64> {
            self.a
                .iter()
                .zip(&self.b)
                .map(|(row, bi)| dot(row, x) - bi)
                .collect()
        }
        fn jac_apply(&self, _x: &[f64], d: &[f64]) -> Vec<f64> {
            self.a.iter().map(|row| dot(row, d)).collect()
        }
        fn jac_transpose_apply(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
            let n = self.c.len();
            let mut out = vec![0.0; n];
            for (row, &vi) in self.a.iter().zip(v) {
                for j in 0..n {
                    out[j] += vi * row[j];
                }
            }
            out
        }
        fn prox_g(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
            crate::prox::prox(&self.g, u, t)
        }
        fn g_value(&self, x: &[f64]) -> f64 {
            self.g.value(x)
        }
    }

    fn scalar_oracle() -> DenseOracle {
        // f = 0, F(x) = x, n = m = 1
        DenseOracle {
            h: vec![0.0],
            c: vec![0.0],
            a: vec![vec![1.0]],
            b: vec![0.0],
            g: ProxKind::Zero,
        }
    }

    /// Gaussian-elimination solve of the dense normal equations
    /// (βI + ρ JᵀJ)(x - x_k) = -(∇f(x_k) + Jᵀ(y_τ + ρ F(x_k))); the g = 0
    /// closed form of the subproblem minimizer.
    pub fn normal_equation_solve(spec: &SubproblemSpec, a: &[Vec<f64>]) -> Vec<f64> {
        let n = spec.x_k.len();
        let mut mat = vec![vec![0.0; n]; n];
        for i in 0..n {
            mat[i][i] = spec.beta;
        }
        for row in a {
            for i in 0..n {
                for j in 0..n {
                    mat[i][j] += spec.rho * row[i] * row[j];
                }
            }
        }
        let v = add_scaled(&spec.y_tau, spec.rho, &spec.constraints_k);
        let jtv = spec.oracle.jac_transpose_apply(&spec.x_k, &v);
        let mut rhs: Vec<f64> = (0..n).map(|i| -(spec.grad_f_k[i] + jtv[i])).collect();
        // partial-pivot elimination
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| mat[i][col].abs().partial_cmp(&mat[j][col].abs()).unwrap())
                .unwrap();
            mat.swap(col, piv);
            rhs.swap(col, piv);
            let d = mat[col][col];
            for i in (col + 1)..n {
                let f = mat[i][col] / d;
                for j in col..n {
                    mat[i][j] -= f * mat[col][j];
                }
                rhs[i] -= f * rhs[col];
            }
        }
        let mut dx = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..n {
                s -= mat[i][j] * dx[j];
            }
            dx[i] = s / mat[i][i];
        }
        add_scaled(&spec.x_k, 1.0, &dx)
    }

    #[test]
    fn grad_at_anchor_with_zero_duals() {
        // x = x_k, y_tau = 0, F(x_k) = 0 -> gradient is ∇f(x_k)
        let o = DenseOracle {
            h: vec![1.0, 2.0],
            c: vec![0.5, -0.3],
            a: vec![vec![1.0, 1.0]],
            b: vec![0.0],
            g: ProxKind::Zero,
        };
        let x_k = vec![1.0, -1.0]; // F(x_k) = 0
        let spec = SubproblemSpec::at(&o, &x_k, &[0.0], 2.0, 3.0);
        let g = smooth_part_grad(&spec, &x_k).unwrap();
        let gf = o.smooth_grad(&x_k);
        assert!(norm_diff(&g, &gf) <= 1e-14);
    }

    #[test]
    fn grad_scalar_hand_expansion() {
        // n=m=1, f=0, F(x)=x, x_k=1, y_tau=0, rho=1, beta=1, at x=1:
        // J^T(y_tau + rho*ell) + beta*(x-x_k) = 1*(0 + 1*1) + 0 = 1
        let o = scalar_oracle();
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 1.0, 1.0);
        let g = smooth_part_grad(&spec, &[1.0]).unwrap();
        assert!((g[0] - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let o = DenseOracle {
            h: vec![1.0, 0.5, 2.0],
            c: vec![0.2, -0.1, 0.7],
            a: vec![vec![1.0, 2.0, -1.0], vec![0.0, 1.0, 1.0]],
            b: vec![0.3, -0.2],
            g: ProxKind::Zero,
        };
        let spec = SubproblemSpec::at(&o, &[0.4, -0.6, 0.1], &[0.5, -0.3], 2.5, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = smooth_part_grad(&spec, &x).unwrap();
            for i in 0..3 {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (spec.smooth_part_value(&xp) - spec.smooth_part_value(&xm)) / (2.0 * h);
                assert!(
                    (g[i] - fd).abs() <= 1e-6 * (1.0 + g[i].abs()),
                    "{} vs {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn lipschitz_identity_jacobian() {
        let o = scalar_oracle();
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 2.0, 1.0);
        let l = estimate_lipschitz(&spec);
        assert!(l >= 3.0 * (1.0 - 1e-3) && l <= 3.0 + 1e-12, "{l}");
    }

    #[test]
    fn lipschitz_zero_rho() {
        let o = scalar_oracle();
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 0.0, 1.0);
        assert_eq!(estimate_lipschitz(&spec), 1.0);
    }

    #[test]
    fn lipschitz_diagonal_jacobian() {
        // J = diag(1, 3): λ_max(JᵀJ) = 9, so L ≈ 0.5 + 9
        let o = DenseOracle {
            h: vec![0.0, 0.0],
            c: vec![0.0, 0.0],
            a: vec![vec![1.0, 0.0], vec![0.0, 3.0]],
            b: vec![0.0, 0.0],
            g: ProxKind::Zero,
        };
        let spec = SubproblemSpec::at(&o, &[0.0, 0.0], &[0.0, 0.0], 1.0, 0.5);
        let l = estimate_lipschitz(&spec);
        assert!((l - 9.5).abs() <= 1e-2, "{l}");
    }

    #[test]
    fn scalar_subproblem_closed_form() {
        // g=0, f=0, F(x)=x, x_k=1, y_tau=0, rho=1, beta=1:
        // (beta + rho)(x - 1) = -(0 + 1*1) -> x = 0.5
        let o = scalar_oracle();
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 1.0, 1.0);
        let (x, _, stats) = solve_subproblem(&spec, &[1.0], 1e-10, 10_000).unwrap();
        assert!(stats.converged);
        assert!((x[0] - 0.5).abs() <= 1e-8, "{}", x[0]);
    }

    #[test]
    fn agrees_with_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let n = rng.gen_range(2..8);
            let m = rng.gen_range(1..4);
            let o = DenseOracle {
                h: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
                c: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                a: (0..m)
                    .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                b: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                g: ProxKind::Zero,
            };
            let x_k: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y_tau: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spec = SubproblemSpec::at(&o, &x_k, &y_tau, 1.7, 0.9);
            let (x, _, _) = solve_subproblem(&spec, &x_k, 1e-9, 50_000).unwrap();
            let xd = normal_equation_solve(&spec, &o.a);
            assert!(
                norm_diff(&x, &xd) <= 1e-6,
                "trial {trial}: {:?} vs {:?}",
                x,
                xd
            );
        }
    }

    #[test]
    fn inactive_ball_matches_unconstrained() {
        // unconstrained minimizer of the scalar subproblem is 0.5, inside
        // {x >= 0, |x| <= 2}
        let mut o = scalar_oracle();
        o.g = ProxKind::IndicatorNonnegBall { radius: 2.0 };
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 1.0, 1.0);
        let (x, _, _) = solve_subproblem(&spec, &[1.0], 1e-10, 10_000).unwrap();
        assert!((x[0] - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn warm_start_never_increases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = 4;
            let o = DenseOracle {
                h: (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
                c: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                a: vec![(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()],
                b: vec![rng.gen_range(-1.0..1.0)],
                g: ProxKind::IndicatorNonnegBall { radius: 1.5 },
            };
            let x_k = project_start(&mut rng, n);
            let spec = SubproblemSpec::at(&o, &x_k, &[0.3], 2.0, 1.0);
            let (x, _, stats) = solve_subproblem(&spec, &x_k, 1e-6, 5_000).unwrap();
            let q0 = spec.objective(&x_k);
            assert!(stats.objective <= q0 + 1e-10 * (1.0 + q0.abs()));
            // strong convexity witness at sampled z
            for _ in 0..20 {
                let z = project_start(&mut rng, n);
                let qz = spec.objective(&z);
                let gap = 0.5 * spec.beta * norm_diff(&z, &x).powi(2);
                assert!(
                    stats.objective <= qz - gap + 1e-4 * (1.0 + qz.abs()),
                    "strong convexity violated"
                );
            }
        }
    }

    fn project_start(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        crate::prox::project_nonneg_ball(&u, 1.5).unwrap()
    }

    #[test]
    fn grad_map_norm_below_tol_on_converged() {
        let o = scalar_oracle();
        let spec = SubproblemSpec::at(&o, &[1.0], &[0.0], 1.0, 1.0);
        let (_, _, stats) = solve_subproblem(&spec, &[1.0], 1e-8, 10_000).unwrap();
        assert!(stats.converged);
        assert!(stats.grad_map_norm <= 1e-8);
    }
}
