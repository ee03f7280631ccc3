//! Fixed reconstructions of a field from an `n`-dimensional latent code:
//! a truncated real Fourier basis, a POD basis, and the frozen decoder half of
//! a pretrained autoencoder.

mod autoencoder;
mod fourier;
mod pod;

pub use autoencoder::{
    ae_decode, pretrain_autoencoder, snapshot_matrix, FrozenDecoder, PretrainedAutoencoder,
    AE_HIDDEN,
};
pub use fourier::{fourier_basis, fourier_modes, FourierMode, Phase, SpectralBasis};
pub use pod::{compute_svd, energy_error, pod_basis, PodBasis, Svd, SVD_MAX_SWEEPS, SVD_TOLERANCE};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamError, GraphError, Tensor2};
use crate::data_gen::Field;

#[derive(Debug, thiserror::Error)]
pub enum DecoderError {
    #[error("requested {requested} modes but only {available} are available")]
    ModeCount { requested: usize, available: usize },
    #[error("{what} has length {got}, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("snapshot matrix is empty")]
    EmptySnapshots,
    #[error(
        "SVD did not converge after {sweeps} sweeps (max relative off-diagonal {off_diagonal:e})"
    )]
    SvdNoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("autoencoder pretraining diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Adam(#[from] AdamError),
    #[error("basis file {path}: {detail}")]
    File { path: String, detail: String },
}

/// A linear decoder `field = B z` with `B` of shape `m^2 x n`.
pub trait LinearBasis {
    fn matrix(&self) -> &Tensor2;
}

impl LinearBasis for Tensor2 {
    fn matrix(&self) -> &Tensor2 {
        self
    }
}

impl LinearBasis for SpectralBasis {
    fn matrix(&self) -> &Tensor2 {
        &self.basis
    }
}

impl LinearBasis for PodBasis {
    fn matrix(&self) -> &Tensor2 {
        &self.modes
    }
}

/// Reconstructs `B z` as an `m x m` field.
pub fn spectral_decode<B: LinearBasis + ?Sized>(
    z: &[f64],
    basis: &B,
) -> Result<Field, DecoderError> {
    let b = basis.matrix();
    if z.len() != b.cols() {
        return Err(DecoderError::Length {
            what: "latent vector",
            expected: b.cols(),
            got: z.len(),
        });
    }
    let m = (b.rows() as f64).sqrt().round() as usize;
    Ok(b.matmul(&Tensor2::column(z.to_vec())).reshaped(m, m))
}

/// Coefficients `B^T u` of a field in an orthonormal basis.
pub fn project<B: LinearBasis + ?Sized>(
    field: &Field,
    basis: &B,
) -> Result<Vec<f64>, DecoderError> {
    let b = basis.matrix();
    if field.len() != b.rows() {
        return Err(DecoderError::Length {
            what: "field",
            expected: b.rows(),
            got: field.len(),
        });
    }
    let col = Tensor2::column(field.data().to_vec());
    Ok(b.transpose().matmul(&col).into_vec())
}

/// Either linear decoder, as persisted on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearDecoder {
    Fourier(SpectralBasis),
    Pod(PodBasis),
}

impl LinearBasis for LinearDecoder {
    fn matrix(&self) -> &Tensor2 {
        match self {
            LinearDecoder::Fourier(b) => &b.basis,
            LinearDecoder::Pod(b) => &b.modes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Fourier,
    Pod,
}

/// JSON form of a linear basis; `matrix` is the `m^2 x n` basis, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub kind: BasisKind,
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_order: Option<Vec<FourierMode>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_error: Option<f64>,
    pub matrix: Vec<f64>,
}

impl From<&LinearDecoder> for BasisFile {
    fn from(d: &LinearDecoder) -> Self {
        match d {
            LinearDecoder::Fourier(b) => BasisFile {
                kind: BasisKind::Fourier,
                m: b.m,
                n: b.n,
                mode_order: Some(b.mode_order.clone()),
                singular_values: None,
                energy_error: None,
                matrix: b.basis.data().to_vec(),
            },
            LinearDecoder::Pod(b) => BasisFile {
                kind: BasisKind::Pod,
                m: b.m,
                n: b.n,
                mode_order: None,
                singular_values: Some(b.singular_values.clone()),
                energy_error: Some(b.energy_error),
                matrix: b.modes.data().to_vec(),
            },
        }
    }
}

impl BasisFile {
    pub fn into_decoder(self) -> Result<LinearDecoder, String> {
        let expected = self.m * self.m * self.n;
        if self.matrix.len() != expected {
            return Err(format!(
                "matrix has {} values, expected {expected}",
                self.matrix.len()
            ));
        }
        let matrix = Tensor2::from_vec(self.m * self.m, self.n, self.matrix);
        match self.kind {
            BasisKind::Fourier => Ok(LinearDecoder::Fourier(SpectralBasis {
                m: self.m,
                n: self.n,
                basis: matrix,
                mode_order: self.mode_order.ok_or("fourier basis without mode_order")?,
            })),
            BasisKind::Pod => {
                let singular_values = self
                    .singular_values
                    .ok_or("pod basis without singular_values")?;
                let energy_error = self
                    .energy_error
                    .unwrap_or_else(|| pod::energy_error(&singular_values, self.n));
                Ok(LinearDecoder::Pod(PodBasis {
                    m: self.m,
                    n: self.n,
                    modes: matrix,
                    singular_values,
                    energy_error,
                }))
            }
        }
    }
}

pub fn write_basis(decoder: &LinearDecoder, path: &Path) -> Result<(), DecoderError> {
    let file_err = |detail: String| DecoderError::File {
        path: path.display().to_string(),
        detail,
    };
    let text =
        serde_json::to_string(&BasisFile::from(decoder)).map_err(|e| file_err(e.to_string()))?;
    fs::write(path, text).map_err(|e| file_err(e.to_string()))
}

pub fn read_basis(path: &Path) -> Result<LinearDecoder, DecoderError> {
    let file_err = |detail: String| DecoderError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
    let file: BasisFile = serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
    file.into_decoder().map_err(file_err)
}
