//! Minimum sum-of-squares clustering through the Burer-Monteiro factorized
//! SDP relaxation, exposed as a [`ProblemOracle`].
//!
//! The m×r factor X is vectorized row-major: x = [x_1ᵀ, ..., x_mᵀ]ᵀ with
//! x_i the i-th row. The data Gram matrix AAᵀ is never materialized; every
//! product routes through A for O(m·d·r) oracle calls.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemOracle;
use crate::prox::project_nonneg_ball;
use crate::vecops::{all_finite, dot};

/// Clustering instance: m points in ℝᵈ, target k clusters, BM rank r ≥ k.
#[derive(Debug, Clone)]
pub struct MsscInstance {
    /// Row-major m×d point matrix; row i is data point aᵢ.
    pub points: Vec<Vec<f64>>,
    pub k: usize,
    pub r: usize,
    pub labels: Option<Vec<usize>>,
}

/// JSON sidecar identifying a generated instance for bench reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub m: usize,
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
}

impl MsscInstance {
    pub fn validate(&self) -> Result<()> {
        let m = self.points.len();
        if m == 0 {
            return Err(Error::invalid("instance has no points"));
        }
        let d = self.points[0].len();
        if self.points.iter().any(|p| p.len() != d) {
            return Err(Error::invalid("ragged point matrix"));
        }
        if self.points.iter().any(|p| !all_finite(p)) {
            return Err(Error::invalid("non-finite data entries"));
        }
        if self.r < self.k {
            return Err(Error::invalid(format!(
                "BM rank r = {} must be at least k = {}",
                self.r, self.k
            )));
        }
        if m < self.k {
            return Err(Error::invalid("fewer points than clusters"));
        }
        if let Some(l) = &self.labels {
            if l.len() != m {
                return Err(Error::invalid("label vector length mismatch"));
            }
        }
        Ok(())
    }
}

/// The factorized clustering problem as an oracle:
/// f(x) = ‖A‖_F² - ‖AᵀX‖_F², g = indicator of {x ≥ 0, ‖x‖ ≤ √r},
/// F_i(x) = x_iᵀ s - 1 with s = Σ_j x_j (or the printed variant
/// x_iᵀ(s - 1_r) behind `paper_constraint`).
pub struct MsscOracle {
    points: Vec<Vec<f64>>, // m×d
    m: usize,
    d: usize,
    r: usize,
    radius: f64,
    frobenius_sq: f64,
    paper_constraint: bool,
}

impl MsscOracle {
    pub fn rows<'a>(&self, x: &'a [f64]) -> impl Iterator<Item = &'a [f64]> + 'a {
        let r = self.r;
        (0..x.len() / r).map(move |i| &x[i * r..(i + 1) * r])
    }

    /// s = Σ_j x_j (column sums of X).
    fn row_sum(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.r];
        for row in self.rows(x) {
            for (sj, xj) in s.iter_mut().zip(row) {
                *sj += xj;
            }
        }
        s
    }

    /// AᵀX as a d×r row-major buffer.
    fn at_x(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.r];
        for (i, row) in self.rows(x).enumerate() {
            let a = &self.points[i];
            for (l, &al) in a.iter().enumerate() {
                let dst = &mut out[l * self.r..(l + 1) * self.r];
                for (o, &xj) in dst.iter_mut().zip(row) {
                    *o += al * xj;
                }
            }
        }
        out
    }
}

/// Build the oracle for an instance; `paper_constraint` selects the printed
/// F_i(x) = x_iᵀ(Σ_j x_j - 1_r) formula instead of the constraint-faithful
/// x_iᵀ Σ_j x_j - 1.
pub fn build_mssc_instance(inst: &MsscInstance, paper_constraint: bool) -> Result<MsscOracle> {
    inst.validate()?;
    let m = inst.points.len();
    let d = inst.points[0].len();
    let frobenius_sq = inst
        .points
        .iter()
        .map(|p| dot(p, p))
        .sum();
    Ok(MsscOracle {
        points: inst.points.clone(),
        m,
        d,
        r: inst.r,
        radius: (inst.r as f64).sqrt(),
        frobenius_sq,
        paper_constraint,
    })
}

impl ProblemOracle for MsscOracle {
    fn dim_primal(&self) -> usize {
        self.m * self.r
    }
    fn dim_constraints(&self) -> usize {
        self.m
    }

    fn smooth_value(&self, x: &[f64]) -> f64 {
        // Tr(G) - Tr(XᵀGX) = ‖A‖_F² - ‖AᵀX‖_F²
        let atx = self.at_x(x);
        self.frobenius_sq - dot(&atx, &atx)
    }

    fn smooth_grad(&self, x: &[f64]) -> Vec<f64> {
        // block i: -2 (A (AᵀX))_i
        let atx = self.at_x(x);
        let mut out = vec![0.0; self.m * self.r];
        for i in 0..self.m {
            let a = &self.points[i];
            let dst = &mut out[i * self.r..(i + 1) * self.r];
            for (l, &al) in a.iter().enumerate() {
                let src = &atx[l * self.r..(l + 1) * self.r];
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += -2.0 * al * v;
                }
            }
        }
        out
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let s = self.row_sum(x);
        self.rows(x)
            .map(|xi| {
                if self.paper_constraint {
                    let shift: f64 = xi.iter().sum();
                    dot(xi, &s) - shift
                } else {
                    dot(xi, &s) - 1.0
                }
            })
            .collect()
    }

    fn jac_apply(&self, x: &[f64], dvec: &[f64]) -> Vec<f64> {
        let s = self.row_sum(x);
        let ds = self.row_sum(dvec);
        let mut out = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let xi = &x[i * self.r..(i + 1) * self.r];
            let di = &dvec[i * self.r..(i + 1) * self.r];
            let mut v = dot(di, &s) + dot(xi, &ds);
            if self.paper_constraint {
                v -= di.iter().sum::<f64>();
            }
            out.push(v);
        }
        out
    }

    fn jac_transpose_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let s = self.row_sum(x);
        // w = Σ_i v_i x_i
        let mut w = vec![0.0; self.r];
        for (i, xi) in self.rows(x).enumerate() {
            for (wj, &xij) in w.iter_mut().zip(xi) {
                *wj += v[i] * xij;
            }
        }
        let mut out = vec![0.0; self.m * self.r];
        for i in 0..self.m {
            let dst = &mut out[i * self.r..(i + 1) * self.r];
            for j in 0..self.r {
                dst[j] = v[i] * s[j] + w[j];
                if self.paper_constraint {
                    dst[j] -= v[i];
                }
            }
        }
        out
    }

    fn prox_g(&self, u: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !(t > 0.0) {
            return Err(Error::invalid("prox step must be positive"));
        }
        let p = project_nonneg_ball(u, self.radius)?;
        let cert = u.iter().zip(&p).map(|(ui, pi)| (ui - pi) / t).collect();
        Ok((p, cert))
    }

    fn g_value(&self, x: &[f64]) -> f64 {
        let tol = 1e-10 * (1.0 + self.radius);
        let inside = x.iter().all(|&xi| xi >= -tol)
            && dot(x, x).sqrt() <= self.radius + tol;
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Exactly feasible start built from a labeling: X_ij = 1/√n_j when point i
/// is in cluster j. Guarantees F(x⁰) = 0, X ≥ 0, and ‖x⁰‖² = k.
pub fn feasible_init(m: usize, r: usize, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != m {
        return Err(Error::invalid("label vector length mismatch"));
    }
    let k = match labels.iter().max() {
        Some(&mx) => mx + 1,
        None => return Err(Error::invalid("empty label vector")),
    };
    if k > r {
        return Err(Error::invalid(format!(
            "labeling uses {k} clusters but rank is {r}"
        )));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::invalid("labeling has an empty cluster"));
    }
    let mut x = vec![0.0; m * r];
    for (i, &l) in labels.iter().enumerate() {
        x[i * r + l] = 1.0 / (sizes[l] as f64).sqrt();
    }
    Ok(x)
}

/// Synthetic data: k unit balls with centers at pairwise distance at least
/// `min_separation`, m points spread near-evenly over them. Deterministic
/// per seed.
pub fn synth_balls(
    m: usize,
    d: usize,
    k: usize,
    min_separation: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if min_separation <= 2.0 {
        return Err(Error::invalid(
            "min_separation must exceed 2 for disjoint unit balls",
        ));
    }
    if m < k || k == 0 || d == 0 {
        return Err(Error::invalid("need m >= k >= 1 and d >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // centers from a zero-mean Gaussian whose typical pairwise distance is a
    // bit above the separation floor, so the data stays near unit scale
    // instead of drifting to a far corner of a bounding box
    let sigma =
        1.25 * min_separation * (k as f64).powf(1.0 / d as f64) / (2.0 * d as f64).sqrt();
    let gauss = |rng: &mut ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while centers.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::invalid(format!(
                "could not place {k} centers at separation {min_separation} in dimension {d}"
            )));
        }
        let cand: Vec<f64> = (0..d).map(|_| sigma * gauss(&mut rng)).collect();
        let ok = centers.iter().all(|c| {
            let dist2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            dist2.sqrt() >= min_separation
        });
        if ok {
            centers.push(cand);
        }
    }
    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let l = i % k; // near-balanced
        // uniform in the unit ball: gaussian direction, radius U^(1/d)
        let dir: Vec<f64> = (0..d)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let nd = dot(&dir, &dir).sqrt().max(f64::MIN_POSITIVE);
        let radius: f64 = rng.gen_range(0.0f64..1.0).powf(1.0 / d as f64);
        let p: Vec<f64> = centers[l]
            .iter()
            .zip(&dir)
            .map(|(c, g)| c + radius * g / nd)
            .collect();
        points.push(p);
        labels.push(l);
    }
    // center the cloud: translation-invariant for clustering, keeps the Gram
    // matrix (and hence gradient magnitudes) as small as the geometry allows
    let mut mean = vec![0.0; d];
    for p in &points {
        for (mj, &pj) in mean.iter_mut().zip(p) {
            *mj += pj / m as f64;
        }
    }
    for p in &mut points {
        for (pj, &mj) in p.iter_mut().zip(&mean) {
            *pj -= mj;
        }
    }
    Ok((points, labels))
}

const COLUMN_PRUNE_TOL: f64 = 1e-6;

/// Labels from the row-argmax of X; columns whose max entry is below 1e-6
/// are pruned first, ties break toward the lowest column index.
pub fn extract_labels(x: &[f64], m: usize, r: usize) -> Result<Vec<usize>> {
    if x.len() != m * r {
        return Err(Error::invalid("x has wrong length for an m x r factor"));
    }
    let mut col_max = vec![0.0f64; r];
    for i in 0..m {
        for j in 0..r {
            col_max[j] = col_max[j].max(x[i * r + j].abs());
        }
    }
    let kept: Vec<usize> = (0..r).filter(|&j| col_max[j] >= COLUMN_PRUNE_TOL).collect();
    if kept.is_empty() {
        return Err(Error::invalid("all-zero factor: no columns to label from"));
    }
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (slot, &j) in kept.iter().enumerate() {
            let v = x[i * r + j];
            if v > best_v {
                best_v = v;
                best = slot;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// Chance-corrected pair-counting agreement between two labelings, in [-1, 1].
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("label vectors differ in length"));
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::invalid("empty label vectors"));
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&ai, &bi) in a.iter().zip(b) {
        table[ai][bi] += 1;
    }
    let choose2 = |x: u64| -> f64 { (x * x.saturating_sub(1)) as f64 / 2.0 };
    let sum_ij: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = (0..ka)
        .map(|i| choose2(table[i].iter().sum()))
        .sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        return Ok(1.0); // both labelings trivial
    }
    Ok((sum_ij - expected) / (max_index - expected))
}

/// Load a rectangular numeric CSV as an instance; `label_column` extracts
/// that (0-based) column as integer ground-truth labels.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<usize>,
    standardize: bool,
    k: usize,
    r: usize,
) -> Result<MsscInstance> {
    let content = std::fs::read_to_string(path)?;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width = None;
    for (row_idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::data(format!(
                    "row {}: expected {w} columns, got {}",
                    row_idx + 1,
                    cells.len()
                )))
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cells.len());
        for (col_idx, cell) in cells.iter().enumerate() {
            if Some(col_idx) == label_column {
                let l: i64 = cell.trim().parse().map_err(|e| {
                    Error::data(format!("row {} col {}: bad label: {e}", row_idx + 1, col_idx + 1))
                })?;
                if l < 0 {
                    return Err(Error::data(format!(
                        "row {}: negative label {l}",
                        row_idx + 1
                    )));
                }
                labels.push(l as usize);
            } else {
                let v: f64 = cell.trim().parse().map_err(|e| {
                    Error::data(format!("row {} col {}: {e}", row_idx + 1, col_idx + 1))
                })?;
                row.push(v);
            }
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::data("empty CSV"));
    }
    if standardize {
        let d = points[0].len();
        let m = points.len() as f64;
        for j in 0..d {
            let mean: f64 = points.iter().map(|p| p[j]).sum::<f64>() / m;
            let var: f64 = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / m;
            let sd = var.sqrt().max(1e-12);
            for p in &mut points {
                p[j] = (p[j] - mean) / sd;
            }
        }
    }
    let inst = MsscInstance {
        points,
        k,
        r,
        labels: if label_column.is_some() { Some(labels) } else { None },
    };
    inst.validate()?;
    Ok(inst)
}
