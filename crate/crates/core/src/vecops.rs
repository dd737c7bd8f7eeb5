//! Small dense-vector helpers shared by the solver loops.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// a + s*b
pub fn add_scaled(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    add_scaled(a, -1.0, b)
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Reject NaN/Inf at oracle boundaries before it can enter solver state.
pub fn ensure_finite(a: &[f64], what: &str) -> Result<()> {
    if all_finite(a) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite entries in {what}")))
    }
}

pub fn ensure_finite_scalar(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite value for {what}")))
    }
}

pub fn ensure_dim(a: &[f64], n: usize, what: &str) -> Result<()> {
    if a.len() == n {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}: expected dimension {n}, got {}",
            a.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_ops() {
        let a = [1.0, 2.0];
        let b = [3.0, -1.0];
        assert_eq!(dot(&a, &b), 1.0);
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(add_scaled(&a, 2.0, &b), vec![7.0, 0.0]);
        assert_eq!(sub(&a, &b), vec![-2.0, 3.0]);
    }

    #[test]
    fn finiteness_guard() {
        assert!(ensure_finite(&[1.0, f64::NAN], "x").is_err());
        assert!(ensure_finite(&[1.0, 2.0], "x").is_ok());
    }
}
