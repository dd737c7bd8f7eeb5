//! Small verification problems: min ½‖x - c‖² subject to aᵀx = b, with an
//! optional nonsmooth term.

use crate::error::Result;
use crate::problem::ProblemOracle;
use crate::prox::{prox, ProxKind};
use crate::vecops::dot;

/// Equality-constrained QP with a single linear constraint.
#[derive(Debug, Clone)]
pub struct ToyQp {
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    pub b: f64,
    pub g: ProxKind,
}

impl ToyQp {
    pub fn new(c: Vec<f64>, a: Vec<f64>, b: f64) -> Self {
        assert_eq!(c.len(), a.len());
        ToyQp {
            c,
            a,
            b,
            g: ProxKind::Zero,
        }
    }

    pub fn with_g(mut self, g: ProxKind) -> Self {
        self.g = g;
        self
    }

    /// Closed-form KKT pair for g = 0:
    /// x* = c - a (aᵀc - b)/‖a‖², y* = (aᵀc - b)/‖a‖².
    pub fn kkt_pair(&self) -> (Vec<f64>, f64) {
        let aa = dot(&self.a, &self.a);
        let ys = (dot(&self.a, &self.c) - self.b) / aa;
        let xs = self
            .c
            .iter()
            .zip(&self.a)
            .map(|(ci, ai)| ci - ai * ys)
            .collect();
        (xs, ys)
    }
}

impl ProblemOracle for ToyQp {
    fn dim_primal(&self) -> usize {
        self.c.len()
    }
    fn dim_constraints(&self) -> usize {
        1
    }
    fn smooth_value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.c)
            .map(|(xi, ci)| 0.5 * (xi - ci) * (xi - ci))
            .sum()
    }
    fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.c).map(|(xi, ci)| xi - ci).collect()
    }
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        vec![dot(&self.a, x) - self.b]
    }
    fn jac_apply(&self, _x: &[f64], d: &[f64]) -> Vec<f64> {
        vec![dot(&self.a, d)]
    }
    fn jac_transpose_apply(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        self.a.iter().map(|ai| ai * v[0]).collect()
    }
    fn prox_g(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        prox(&self.g, u, t)
    }
    fn g_value(&self, x: &[f64]) -> f64 {
        self.g.value(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{assert_adjoint, check_gradient_fd, check_jacobian_fd, kkt_residual};

    #[test]
    fn kkt_pair_satisfies_system() {
        let toy = ToyQp::new(vec![1.0, 1.0], vec![1.0, 0.0], 0.0);
        let (xs, ys) = toy.kkt_pair();
        assert_eq!(xs, vec![0.0, 1.0]);
        assert_eq!(ys, 1.0);
        let r = kkt_residual(&toy, &xs, &[ys], &[0.0, 0.0]).unwrap();
        assert!(r.stationarity <= 1e-14 && r.feasibility <= 1e-14);
    }

    #[test]
    fn oracle_checks_pass() {
        let toy = ToyQp::new(vec![0.3, -1.2, 2.0], vec![1.0, -0.5, 0.25], 0.7);
        assert!(assert_adjoint(&toy, &[0.0; 3], 20).unwrap() <= 1e-10);
        assert!(check_gradient_fd(&toy, &[0.0; 3], 20, 1) <= 1e-6);
        assert!(check_jacobian_fd(&toy, &[0.0; 3], 20, 2) <= 1e-6);
    }
}
