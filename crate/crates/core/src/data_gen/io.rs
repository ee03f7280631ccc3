use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Coefficients, Dataset, Material, SampleBundle};
use crate::autodiff::Tensor2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub material: Material,
    pub m: usize,
    pub mu: f64,
    pub seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub coeffs: Coefficients,
    pub u: Vec<f64>,
    pub qx: Vec<f64>,
    pub qy: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub f: Vec<f64>,
    pub boundary_u: Vec<f64>,
    pub boundary_q: Vec<f64>,
}

/// On-disk dataset: a header plus per-sample row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed dataset {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("dataset {path}: {detail}")]
    Invalid { path: String, detail: String },
}

impl From<&Dataset> for DatasetFile {
    fn from(ds: &Dataset) -> Self {
        DatasetFile {
            header: DatasetHeader {
                material: ds.material,
                m: ds.m,
                mu: ds.mu,
                seed: ds.seed,
                count: ds.samples.len(),
            },
            samples: ds
                .samples
                .iter()
                .map(|s| SampleRecord {
                    coeffs: s.coeffs,
                    u: s.u.data().to_vec(),
                    qx: s.qx.data().to_vec(),
                    qy: s.qy.data().to_vec(),
                    k: s.k.data().to_vec(),
                    f: s.f.data().to_vec(),
                    boundary_u: s.boundary_u.clone(),
                    boundary_q: s.boundary_q.clone(),
                })
                .collect(),
        }
    }
}

impl DatasetFile {
    pub fn into_dataset(self) -> Result<Dataset, String> {
        let DatasetHeader {
            material,
            m,
            mu,
            seed,
            count,
        } = self.header;
        if self.samples.len() != count {
            return Err(format!(
                "header count {count} but {} samples",
                self.samples.len()
            ));
        }
        let n = m * m;
        let field = |name: &str, k: usize, v: Vec<f64>| -> Result<Tensor2, String> {
            if v.len() != n {
                return Err(format!(
                    "sample {k}: {name} has {} values, expected {n}",
                    v.len()
                ));
            }
            Ok(Tensor2::from_vec(m, m, v))
        };
        let mut samples = Vec::with_capacity(count);
        for (k, r) in self.samples.into_iter().enumerate() {
            if r.boundary_u.len() != 4 * m || r.boundary_q.len() != 4 * m {
                return Err(format!(
                    "sample {k}: boundary vectors must have {} values",
                    4 * m
                ));
            }
            samples.push(SampleBundle {
                material,
                coeffs: r.coeffs,
                u: field("u", k, r.u)?,
                qx: field("qx", k, r.qx)?,
                qy: field("qy", k, r.qy)?,
                k: field("K", k, r.k)?,
                f: field("f", k, r.f)?,
                boundary_u: r.boundary_u,
                boundary_q: r.boundary_q,
            });
        }
        Ok(Dataset {
            material,
            m,
            mu,
            seed,
            samples,
        })
    }
}

/// `<material>_D<count>_mu<percent>_m<m>.json`, e.g. `material1_D100_mu1_m10.json`.
pub fn dataset_file_name(material: Material, count: usize, mu: f64, m: usize) -> String {
    let percent = (mu * 100.0 * 1e6).round() / 1e6;
    format!("{}_D{count}_mu{percent}_m{m}.json", material.name())
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetIoError> {
    let text =
        serde_json::to_string(&DatasetFile::from(ds)).map_err(|source| DatasetIoError::Json {
            path: path.display().to_string(),
            source,
        })?;
    fs::write(path, text).map_err(|source| DatasetIoError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetIoError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| DatasetIoError::Io {
        path: p.clone(),
        source,
    })?;
    let file: DatasetFile = serde_json::from_str(&text).map_err(|source| DatasetIoError::Json {
        path: p.clone(),
        source,
    })?;
    file.into_dataset()
        .map_err(|detail| DatasetIoError::Invalid { path: p, detail })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_name_convention() {
        assert_eq!(
            dataset_file_name(Material::Material1, 100, 0.01, 10),
            "material1_D100_mu1_m10.json"
        );
        assert_eq!(
            dataset_file_name(Material::Material2, 1000, 0.0, 10),
            "material2_D1000_mu0_m10.json"
        );
        assert_eq!(
            dataset_file_name(Material::Material2, 10, 0.05, 20),
            "material2_D10_mu5_m20.json"
        );
    }

    #[test]
    fn round_trip_through_disk() {
        let ds = Dataset::generate(Material::Material2, 4, 5, 0.01, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        write_dataset(&ds, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn rejects_wrong_field_length() {
        let ds = Dataset::generate(Material::Material1, 2, 4, 0.0, 3).unwrap();
        let mut file = DatasetFile::from(&ds);
        file.samples[1].qx.pop();
        let err = file.into_dataset().unwrap_err();
        assert!(err.contains("sample 1") && err.contains("qx"), "{err}");
    }
}
