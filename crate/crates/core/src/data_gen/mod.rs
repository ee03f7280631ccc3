//! Manufactured-solution datasets for the nonlinear diffusion problem
//! `div q = f`, `q = -K(u) grad u` on the unit square.

mod grid;
mod io;
mod split;

pub use grid::Grid;
pub use io::{
    dataset_file_name, read_dataset, write_dataset, DatasetFile, DatasetHeader, DatasetIoError,
    SampleRecord,
};
pub use split::{split_dataset, AePartition, SplitIndices, SplitScheme};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor2;
use crate::rng::{derive_seed, streams, SplitMix64};

/// Scalar field on an `m x m` grid, row-major as described on [`Grid`].
pub type Field = Tensor2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("sample count must be at least 1")]
    EmptyCount,
    #[error("grid size m = {0} is below the minimum of 3")]
    GridTooSmall(usize),
    #[error("a + bx + cy = {value} <= 0 at ({x}, {y}); square root is singular")]
    Singular { value: f64, x: f64, y: f64 },
    #[error("noise amplitude mu must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("dataset of size {0} is too small to split (need at least 10)")]
    TooSmallToSplit(usize),
    #[error("split partition '{0}' would be empty")]
    EmptyPartition(&'static str),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Material {
    /// `K(u) = u (1 - u)`, manufactured from `u = sqrt(a + bx + cy)`.
    #[serde(rename = "material1", alias = "1")]
    Material1,
    /// `K(u) = 1 / (1 + exp(-5 (u - 2)))`, manufactured from `u = a + bx + cy`.
    #[serde(rename = "material2", alias = "2")]
    Material2,
}

impl Material {
    /// True constitutive law `K(u)`.
    pub fn conductivity(self, u: f64) -> f64 {
        match self {
            Material::Material1 => u * (1.0 - u),
            Material::Material2 => 1.0 / (1.0 + (-5.0 * (u - 2.0)).exp()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Material1 => "material1",
            Material::Material2 => "material2",
        }
    }

    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            1 => Some(Material::Material1),
            2 => Some(Material::Material2),
            _ => None,
        }
    }
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Point values of the manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub u: f64,
    pub k: f64,
    pub qx: f64,
    pub qy: f64,
    pub f: f64,
}

/// Closed-form fields at `(x, y)` with the sign convention `q = -K grad u`, `f = div q`.
pub fn point_values(
    material: Material,
    coeffs: Coefficients,
    x: f64,
    y: f64,
) -> Result<PointValues, DataError> {
    let Coefficients { a, b, c } = coeffs;
    let s = a + b * x + c * y;
    let grad2 = b * b + c * c;
    match material {
        Material::Material1 => {
            if s <= 0.0 {
                return Err(DataError::Singular { value: s, x, y });
            }
            let r = s.sqrt();
            Ok(PointValues {
                u: r,
                k: (1.0 - r) * r,
                qx: -0.5 * b * (1.0 - r),
                qy: -0.5 * c * (1.0 - r),
                f: grad2 / (4.0 * r),
            })
        }
        Material::Material2 => {
            let e = (-5.0 * (s - 2.0)).exp();
            let k = 1.0 / (1.0 + e);
            Ok(PointValues {
                u: s,
                k,
                qx: -k * b,
                qy: -k * c,
                f: -5.0 * e / ((1.0 + e) * (1.0 + e)) * grad2,
            })
        }
    }
}

/// One manufactured experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBundle {
    pub material: Material,
    pub coeffs: Coefficients,
    pub u: Field,
    pub qx: Field,
    pub qy: Field,
    pub k: Field,
    pub f: Field,
    /// `u` on the edges `x=0, x=1, y=0, y=1`, `4m` values.
    pub boundary_u: Vec<f64>,
    /// Edge-normal flux: `qx` on `x=0, x=1`, then `qy` on `y=0, y=1`.
    pub boundary_q: Vec<f64>,
}

impl SampleBundle {
    pub fn grid(&self) -> Grid {
        Grid::new(self.u.rows())
    }

    /// Network input: `boundary_u` followed by `boundary_q` (`8m` values).
    pub fn input(&self) -> Vec<f64> {
        let mut x = self.boundary_u.clone();
        x.extend_from_slice(&self.boundary_q);
        x
    }
}

/// Draws `count` coefficient triples, each component uniform on `[0, 1)`.
///
/// Sample `k` uses the substream `derive_seed(seed, k)` and draws `a, b, c` in
/// that order; `a` is redrawn while below `1e-6` so the square-root solution
/// stays regular.
pub fn sample_coefficients(count: usize, seed: u64) -> Result<Vec<Coefficients>, DataError> {
    if count == 0 {
        return Err(DataError::EmptyCount);
    }
    Ok((0..count)
        .map(|k| {
            let mut rng = SplitMix64::new(derive_seed(seed, k as u64));
            let mut a = rng.uniform();
            let b = rng.uniform();
            let c = rng.uniform();
            while a < 1e-6 {
                a = rng.uniform();
            }
            Coefficients { a, b, c }
        })
        .collect())
}

/// Evaluates the manufactured solution of `material` on the `m x m` grid.
pub fn evaluate_fields(
    material: Material,
    coeffs: Coefficients,
    m: usize,
) -> Result<SampleBundle, DataError> {
    if m < 3 {
        return Err(DataError::GridTooSmall(m));
    }
    let grid = Grid::new(m);
    let n = grid.nodes();
    let mut u = Tensor2::zeros(m, m);
    let mut qx = Tensor2::zeros(m, m);
    let mut qy = Tensor2::zeros(m, m);
    let mut k = Tensor2::zeros(m, m);
    let mut f = Tensor2::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let p = point_values(material, coeffs, grid.coord(i), grid.coord(j))?;
            u.set(j, i, p.u);
            k.set(j, i, p.k);
            qx.set(j, i, p.qx);
            qy.set(j, i, p.qy);
            f.set(j, i, p.f);
        }
    }
    debug_assert_eq!(u.len(), n);
    let mut bundle = SampleBundle {
        material,
        coeffs,
        u,
        qx,
        qy,
        k,
        f,
        boundary_u: Vec::new(),
        boundary_q: Vec::new(),
    };
    let (bu, bq) = extract_boundaries(&bundle);
    bundle.boundary_u = bu;
    bundle.boundary_q = bq;
    Ok(bundle)
}

/// Boundary vectors of the fields: `u` on the four edges and the edge-normal
/// flux (`qx` on vertical edges, `qy` on horizontal ones), `4m` values each.
pub fn extract_boundaries(bundle: &SampleBundle) -> (Vec<f64>, Vec<f64>) {
    let grid = bundle.grid();
    let u = bundle.u.data();
    let boundary_u = grid.boundary_indices().into_iter().map(|i| u[i]).collect();
    let mut boundary_q: Vec<f64> = grid
        .vertical_edges()
        .into_iter()
        .map(|i| bundle.qx.data()[i])
        .collect();
    boundary_q.extend(
        grid.horizontal_edges()
            .into_iter()
            .map(|i| bundle.qy.data()[i]),
    );
    (boundary_u, boundary_q)
}

/// Adds Gaussian noise scaled by the per-sample field maxima.
///
/// `u` and `boundary_u` receive `N(0, (mu max|u|)^2)`; `qx` and the vertical
/// half of `boundary_q` use `mu max|qx|`; `qy` and the horizontal half use
/// `mu max|qy|`. `K` and `f` are left untouched. Draw order: `u`,
/// `boundary_u`, `qx`, `qy`, `boundary_q`.
pub fn add_noise(
    bundle: &SampleBundle,
    mu: f64,
    noise_seed: u64,
) -> Result<SampleBundle, DataError> {
    if mu.is_nan() || mu < 0.0 {
        return Err(DataError::NegativeNoise(mu));
    }
    let mut out = bundle.clone();
    if mu == 0.0 {
        return Ok(out);
    }
    let mut rng = SplitMix64::new(noise_seed);
    let sigma_u = mu * bundle.u.max_abs();
    let sigma_qx = mu * bundle.qx.max_abs();
    let sigma_qy = mu * bundle.qy.max_abs();
    let mut perturb = |values: &mut [f64], sigma: f64| {
        for v in values {
            *v += sigma * rng.normal();
        }
    };
    perturb(out.u.data_mut(), sigma_u);
    perturb(&mut out.boundary_u, sigma_u);
    perturb(out.qx.data_mut(), sigma_qx);
    perturb(out.qy.data_mut(), sigma_qy);
    let half = out.boundary_q.len() / 2;
    let (vertical, horizontal) = out.boundary_q.split_at_mut(half);
    perturb(vertical, sigma_qx);
    perturb(horizontal, sigma_qy);
    Ok(out)
}

/// A homogeneous collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub material: Material,
    pub m: usize,
    pub mu: f64,
    pub seed: u64,
    pub samples: Vec<SampleBundle>,
}

impl Dataset {
    /// Generates `count` samples: coefficients from stream `COEFFICIENTS` of
    /// `seed`, noise for sample `k` from `derive_seed(derive_seed(seed, NOISE), k)`.
    pub fn generate(
        material: Material,
        count: usize,
        m: usize,
        mu: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        if mu.is_nan() || mu < 0.0 {
            return Err(DataError::NegativeNoise(mu));
        }
        let coeffs = sample_coefficients(count, derive_seed(seed, streams::COEFFICIENTS))?;
        let noise_root = derive_seed(seed, streams::NOISE);
        let samples = coeffs
            .into_iter()
            .enumerate()
            .map(|(k, c)| {
                let clean = evaluate_fields(material, c, m)?;
                add_noise(&clean, mu, derive_seed(noise_root, k as u64))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            material,
            m,
            mu,
            seed,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.m)
    }

    /// Noise-free fields regenerated from the stored coefficients.
    pub fn clean(&self) -> Result<Dataset, DataError> {
        let samples = self
            .samples
            .iter()
            .map(|s| evaluate_fields(self.material, s.coeffs, self.m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset {
            mu: 0.0,
            samples,
            ..self.clone()
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Range of `u` over all nodes of all samples.
    pub fn u_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .flat_map(|s| s.u.data().iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.samples.is_empty() {
            return Err(DataError::EmptyCount);
        }
        for (k, s) in self.samples.iter().enumerate() {
            if s.material != self.material || s.u.shape() != (self.m, self.m) {
                return Err(DataError::Inconsistent(format!(
                    "sample {k} does not match material {} on a {}x{} grid",
                    self.material, self.m, self.m
                )));
            }
        }
        Ok(())
    }
}
