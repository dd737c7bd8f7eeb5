//! Closed-form proximal and projection operators with subgradient
//! certificates for the nonsmooth terms shipped with the crate.

use crate::error::{Error, Result};
use crate::vecops::norm;

/// The nonsmooth terms g supported with closed-form prox.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxKind {
    /// g = 0.
    Zero,
    /// Indicator of the box [lo, hi] componentwise.
    IndicatorBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Indicator of {x ≥ 0, ‖x‖ ≤ radius}.
    IndicatorNonnegBall { radius: f64 },
    /// weight * ‖x‖₁.
    L1 { weight: f64 },
}

impl ProxKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProxKind::Zero => Ok(()),
            ProxKind::IndicatorBox { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::invalid("box bounds dimension mismatch"));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::invalid("box requires lo <= hi componentwise"));
                }
                Ok(())
            }
            ProxKind::IndicatorNonnegBall { radius } => {
                if *radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("ball radius must be positive"))
                }
            }
            ProxKind::L1 { weight } => {
                if *weight >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid("l1 weight must be nonnegative"))
                }
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ProxKind::Zero => 0.0,
            ProxKind::IndicatorBox { lo, hi } => {
                let tol = 1e-12;
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(xi, (l, h))| *xi >= l - tol && *xi <= h + tol);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxKind::IndicatorNonnegBall { radius } => {
                let tol = 1e-10 * (1.0 + radius);
                if x.iter().all(|&xi| xi >= -tol) && norm(x) <= radius + tol {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxKind::L1 { weight } => weight * x.iter().map(|xi| xi.abs()).sum::<f64>(),
        }
    }
}

/// Projection onto {x ≥ 0, ‖x‖ ≤ radius}: clip to the nonnegative orthant,
/// then rescale onto the ball if outside. Exact because the ball is centered
/// at the apex of the cone.
pub fn project_nonneg_ball(u: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    let mut p: Vec<f64> = u.iter().map(|&ui| ui.max(0.0)).collect();
    let nrm = norm(&p);
    if nrm > radius {
        let s = radius / nrm;
        for pi in &mut p {
            *pi *= s;
        }
    }
    Ok(p)
}

/// prox_{t g}(u) together with the certificate (u - p)/t ∈ ∂g(p).
pub fn prox(kind: &ProxKind, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("prox step must be positive, got {t}")));
    }
    kind.validate()?;
    let p = match kind {
        ProxKind::Zero => u.to_vec(),
        ProxKind::IndicatorBox { lo, hi } => u
            .iter()
            .zip(lo.iter().zip(hi))
            .map(|(ui, (l, h))| ui.clamp(*l, *h))
            .collect(),
        ProxKind::IndicatorNonnegBall { radius } => project_nonneg_ball(u, *radius)?,
        ProxKind::L1 { weight } => {
            let thr = t * weight;
            u.iter()
                .map(|&ui| {
                    // ties at exactly the threshold map to 0
                    if ui > thr {
                        ui - thr
                    } else if ui < -thr {
                        ui + thr
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let cert: Vec<f64> = u.iter().zip(&p).map(|(ui, pi)| (ui - pi) / t).collect();
    Ok((p, cert))
}
