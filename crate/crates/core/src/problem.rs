//! Oracle contract for composite problems `min f(x) + g(x) s.t. F(x) = 0`
//! and the approximate KKT residual used as the stopping test.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vecops::{dot, ensure_dim, ensure_finite, ensure_finite_scalar, norm, norm_diff};

/// Evaluation contract for a problem instance. All solver loops talk to the
/// problem exclusively through this trait.
///
/// The smooth objective `f` and constraint map `F` are exposed through values,
/// gradients, and Jacobian matvec/rmatvec products; the Jacobian is never
/// materialized. The nonsmooth term `g` enters only through its prox, which
/// must return the prox point together with a subgradient certificate
/// `(u - p)/t` belonging to `∂g(p)`.
///
/// Implementations must be pure: no mutation of shared state, safe to call
/// from concurrent runs.
pub trait ProblemOracle: Sync {
    fn dim_primal(&self) -> usize;
    fn dim_constraints(&self) -> usize;

    /// f(x)
    fn smooth_value(&self, x: &[f64]) -> f64;
    /// ∇f(x)
    fn smooth_grad(&self, x: &[f64]) -> Vec<f64>;
    /// F(x)
    fn constraints(&self, x: &[f64]) -> Vec<f64>;
    /// J_F(x) d
    fn jac_apply(&self, x: &[f64], d: &[f64]) -> Vec<f64>;
    /// J_F(x)^T v
    fn jac_transpose_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64>;
    /// prox_{t g}(u) together with the certificate (u - p)/t ∈ ∂g(p).
    fn prox_g(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)>;
    /// g(x), possibly +∞ for indicator functions.
    fn g_value(&self, x: &[f64]) -> f64;
}

/// Approximate KKT residual of a primal/dual pair.
///
/// `stationarity` is an upper bound on dist(-∇f(x) - J_F(x)^T y, ∂g(x))
/// obtained from a prox subgradient certificate; `feasibility` is ‖F(x)‖.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
}

impl KktResidual {
    pub fn within(&self, eps_stat: f64, eps_feas: f64) -> bool {
        self.stationarity <= eps_stat && self.feasibility <= eps_feas
    }
}

/// Residual of the approximate KKT system at `(x, y)`, certified by a
/// subgradient `certificate ∈ ∂g(x)` from the most recent prox call at `x`.
pub fn kkt_residual(
    oracle: &dyn ProblemOracle,
    x: &[f64],
    y: &[f64],
    certificate: &[f64],
) -> Result<KktResidual> {
    let n = oracle.dim_primal();
    let m = oracle.dim_constraints();
    ensure_dim(x, n, "kkt_residual x")?;
    ensure_dim(y, m, "kkt_residual y")?;
    ensure_dim(certificate, n, "kkt_residual certificate")?;

    let grad = oracle.smooth_grad(x);
    ensure_finite(&grad, "smooth_grad")?;
    let jty = oracle.jac_transpose_apply(x, y);
    ensure_finite(&jty, "jac_transpose_apply")?;
    let f_val = oracle.constraints(x);
    ensure_finite(&f_val, "constraints")?;

    let stat = (0..n)
        .map(|i| {
            let s = grad[i] + jty[i] + certificate[i];
            s * s
        })
        .sum::<f64>()
        .sqrt();
    let res = KktResidual {
        stationarity: stat,
        feasibility: norm(&f_val),
    };
    ensure_finite_scalar(res.stationarity, "stationarity")?;
    Ok(res)
}

/// Max relative adjointness violation |⟨Jd, v⟩ - ⟨d, J^T v⟩| / (1 + ‖d‖‖v‖)
/// over `trials` random direction pairs.
pub fn assert_adjoint(oracle: &dyn ProblemOracle, x: &[f64], trials: usize) -> Result<f64> {
    let n = oracle.dim_primal();
    let m = oracle.dim_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jd = oracle.jac_apply(x, &d);
        ensure_finite(&jd, "jac_apply")?;
        let jtv = oracle.jac_transpose_apply(x, &v);
        ensure_finite(&jtv, "jac_transpose_apply")?;
        let lhs = dot(&jd, &v);
        let rhs = dot(&d, &jtv);
        let viol = (lhs - rhs).abs() / (1.0 + norm(&d) * norm(&v));
        worst = worst.max(viol);
    }
    Ok(worst)
}

/// Max relative error of `smooth_grad` against central finite differences of
/// `smooth_value`, over `points` random points drawn near `x0`.
pub fn check_gradient_fd(oracle: &dyn ProblemOracle, x0: &[f64], points: usize, seed: u64) -> f64 {
    let n = oracle.dim_primal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = x0
            .iter()
            .map(|&xi| xi + rng.gen_range(-0.5..0.5))
            .collect();
        let grad = oracle.smooth_grad(&x);
        let mut fd = vec![0.0; n];
        let mut xp = x.clone();
        for i in 0..n {
            xp[i] = x[i] + h;
            let fp = oracle.smooth_value(&xp);
            xp[i] = x[i] - h;
            let fm = oracle.smooth_value(&xp);
            xp[i] = x[i];
            fd[i] = (fp - fm) / (2.0 * h);
        }
        let err = norm_diff(&grad, &fd) / (1.0 + norm(&grad));
        worst = worst.max(err);
    }
    worst
}

/// Max relative error of `jac_apply` against central finite differences of
/// `constraints` along random directions.
pub fn check_jacobian_fd(oracle: &dyn ProblemOracle, x0: &[f64], points: usize, seed: u64) -> f64 {
    let n = oracle.dim_primal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: Vec<f64> = x0
            .iter()
            .map(|&xi| xi + rng.gen_range(-0.5..0.5))
            .collect();
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jd = oracle.jac_apply(&x, &d);
        let xp: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + h * di).collect();
        let xm: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - h * di).collect();
        let fp = oracle.constraints(&xp);
        let fm = oracle.constraints(&xm);
        let fd: Vec<f64> = fp
            .iter()
            .zip(&fm)
            .map(|(p, m_)| (p - m_) / (2.0 * h))
            .collect();
        let err = norm_diff(&jd, &fd) / (1.0 + norm(&jd));
        worst = worst.max(err);
    }
    worst
}

/// Validate the prox contract at `u`: `t * certificate == u - p` and `g(p)` finite.
pub fn check_prox_certificate(oracle: &dyn ProblemOracle, u: &[f64], t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::invalid("prox step must be positive"));
    }
    let (p, cert) = oracle.prox_g(u, t)?;
    if !oracle.g_value(&p).is_finite() {
        return Err(Error::numerical("g infinite at prox output"));
    }
    let resid = u
        .iter()
        .zip(&p)
        .zip(&cert)
        .map(|((ui, pi), ci)| {
            let r = t * ci - (ui - pi);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    Ok(resid)
}
