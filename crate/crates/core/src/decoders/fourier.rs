use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::DecoderError;
use crate::autodiff::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Cos,
    Sin,
}

/// One real Fourier mode `cos` or `sin` of `2π (k1 i + k2 j) / m`, with `i`
/// the column (x) index and `j` the row (y) index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k1: usize,
    pub k2: usize,
    pub phase: Phase,
}

/// Truncated orthonormal real Fourier basis on the `m x m` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub m: usize,
    pub n: usize,
    /// `N x n`, one basis function per column.
    pub basis: Tensor2,
    pub mode_order: Vec<FourierMode>,
}

/// Every real mode of the `m x m` grid in ascending `(k1 + k2, k1, phase)`
/// order. A wavevector is skipped when its negation (mod `m`) came earlier,
/// and the sine of a self-conjugate wavevector (identically zero on the
/// grid) is dropped, leaving exactly `m^2` modes.
pub fn fourier_modes(m: usize) -> Vec<FourierMode> {
    let mut vectors: Vec<(usize, usize)> = (0..m)
        .flat_map(|k1| (0..m).map(move |k2| (k1, k2)))
        .collect();
    vectors.sort_by_key(|&(k1, k2)| (k1 + k2, k1));
    let mut seen = vec![false; m * m];
    let mut modes = Vec::with_capacity(m * m);
    for (k1, k2) in vectors {
        let conj = ((m - k1) % m, (m - k2) % m);
        if seen[conj.0 * m + conj.1] {
            continue;
        }
        seen[k1 * m + k2] = true;
        modes.push(FourierMode {
            k1,
            k2,
            phase: Phase::Cos,
        });
        if conj != (k1, k2) {
            modes.push(FourierMode {
                k1,
                k2,
                phase: Phase::Sin,
            });
        }
    }
    modes
}

fn mode_column(mode: FourierMode, m: usize) -> Vec<f64> {
    let nodes = (m * m) as f64;
    let self_conjugate = (2 * mode.k1).is_multiple_of(m) && (2 * mode.k2).is_multiple_of(m);
    let norm = if self_conjugate {
        1.0 / nodes.sqrt()
    } else {
        (2.0 / nodes).sqrt()
    };
    let mut col = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            // Reduce the phase index mod m first so large arguments stay exact.
            let t = ((mode.k1 * i + mode.k2 * j) % m) as f64 / m as f64;
            let v = match mode.phase {
                Phase::Cos => (2.0 * PI * t).cos(),
                Phase::Sin => (2.0 * PI * t).sin(),
            };
            col.push(norm * v);
        }
    }
    col
}

/// The first `n` modes of [`fourier_modes`] as orthonormal columns.
pub fn fourier_basis(m: usize, n: usize) -> Result<SpectralBasis, DecoderError> {
    let total = m * m;
    if m == 0 || n == 0 || n > total {
        return Err(DecoderError::ModeCount {
            requested: n,
            available: total,
        });
    }
    let mode_order: Vec<FourierMode> = fourier_modes(m).into_iter().take(n).collect();
    let mut basis = Tensor2::zeros(total, n);
    for (c, &mode) in mode_order.iter().enumerate() {
        for (r, v) in mode_column(mode, m).into_iter().enumerate() {
            basis.set(r, c, v);
        }
    }
    Ok(SpectralBasis {
        m,
        n,
        basis,
        mode_order,
    })
}
