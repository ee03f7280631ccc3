use serde::{Deserialize, Serialize};

use super::DecoderError;
use crate::autodiff::Tensor2;

pub const SVD_TOLERANCE: f64 = 1e-12;
pub const SVD_MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `A = U diag(s) V^T` with `k = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    /// `rows x k`; columns belonging to zero singular values are zero.
    pub u: Tensor2,
    /// Descending, non-negative, length `k`.
    pub singular_values: Vec<f64>,
    /// `cols x k`, orthonormal columns.
    pub v: Tensor2,
    pub sweeps: usize,
}

impl Svd {
    pub fn reconstruct(&self) -> Tensor2 {
        let mut us = self.u.clone();
        let k = self.singular_values.len();
        for row in us.data_mut().chunks_mut(k) {
            for (x, s) in row.iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose())
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Column pairs of a working copy of `A` are rotated until every pair is
/// orthogonal to relative tolerance [`SVD_TOLERANCE`]; the accumulated
/// rotations form `V`. At most [`SVD_MAX_SWEEPS`] sweeps are attempted.
/// Columns with squared norm below `1e-26 ||A||_F^2` count as zero.
pub fn compute_svd(a: &Tensor2) -> Result<Svd, DecoderError> {
    let (rows, cols) = a.shape();
    if a.is_empty() {
        return Err(DecoderError::EmptySnapshots);
    }
    // Column-major working storage keeps each rotation on contiguous memory.
    let mut w: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..rows).map(|r| a.get(r, c)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|c| {
            let mut e = vec![0.0; cols];
            e[c] = 1.0;
            e
        })
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let rotate = |x: &mut [f64], y: &mut [f64], c: f64, s: f64| {
        for (p, q) in x.iter_mut().zip(y.iter_mut()) {
            let (xp, yq) = (*p, *q);
            *p = c * xp - s * yq;
            *q = s * xp + c * yq;
        }
    };
    // Columns this small are numerically zero (the null space of a
    // rank-deficient matrix) and are left alone.
    let negligible = 1e-26 * w.iter().map(|c| dot(c, c)).sum::<f64>();
    let mut sweeps = 0;
    loop {
        let mut off = 0.0_f64;
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= SVD_TOLERANCE {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = w.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps >= SVD_MAX_SWEEPS {
            return Err(DecoderError::SvdNoConvergence {
                sweeps,
                off_diagonal: off,
            });
        }
    }
    let norms: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&p, &q| norms[q].total_cmp(&norms[p]).then(p.cmp(&q)));
    let k = rows.min(cols);
    let mut u = Tensor2::zeros(rows, k);
    let mut vt = Tensor2::zeros(cols, k);
    let mut singular_values = Vec::with_capacity(k);
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    for (out, &c) in order.iter().take(k).enumerate() {
        let sigma = norms[c];
        singular_values.push(sigma);
        if sigma > scale * 1e-14 && sigma > 0.0 {
            for (r, x) in w[c].iter().enumerate() {
                u.set(r, out, x / sigma);
            }
        }
        for (r, x) in v[c].iter().enumerate() {
            vt.set(r, out, *x);
        }
    }
    Ok(Svd {
        u,
        singular_values,
        v: vt,
        sweeps,
    })
}

/// Proper orthogonal decomposition basis of a snapshot matrix (one flattened field per row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    pub m: usize,
    pub n: usize,
    /// `N x n`, the leading right singular vectors.
    pub modes: Tensor2,
    /// All singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    /// Fraction of squared singular-value mass discarded by keeping `n` modes.
    pub energy_error: f64,
}

/// `1 - sum_{i<=n} s_i^2 / sum_i s_i^2`, clamped to `[0, 1]`.
pub fn energy_error(singular_values: &[f64], n: usize) -> f64 {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let kept: f64 = singular_values.iter().take(n).map(|s| s * s).sum();
    (1.0 - kept / total).clamp(0.0, 1.0)
}

/// POD basis with `n` modes from the rows of `snapshots` (`D x m^2`).
pub fn pod_basis(snapshots: &Tensor2, n: usize) -> Result<PodBasis, DecoderError> {
    let svd = compute_svd(snapshots)?;
    let available = svd.singular_values.len();
    if n == 0 || n > available {
        return Err(DecoderError::ModeCount {
            requested: n,
            available,
        });
    }
    let nodes = snapshots.cols();
    let m = (nodes as f64).sqrt().round() as usize;
    if m * m != nodes {
        return Err(DecoderError::Length {
            what: "snapshot row",
            expected: m * m,
            got: nodes,
        });
    }
    Ok(PodBasis {
        m,
        n,
        modes: svd.v.columns(0, n),
        energy_error: energy_error(&svd.singular_values, n),
        singular_values: svd.singular_values,
    })
}
