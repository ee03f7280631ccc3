use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    /// 20% validation, remainder split 70/30 train/test.
    Standard,
    /// 20% validation, remainder halved into autoencoder and PGNNIV parts,
    /// each split 70/30 train/test.
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AePartition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub validation: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Autoencoder half of the non-validation data (autoencoder scheme only).
    pub ae: Option<AePartition>,
}

impl SplitIndices {
    pub fn all(&self) -> Vec<usize> {
        let mut out = self.validation.clone();
        out.extend(&self.train);
        out.extend(&self.test);
        if let Some(ae) = &self.ae {
            out.extend(&ae.train);
            out.extend(&ae.test);
        }
        out
    }
}

fn round_count(total: usize, fraction: f64) -> usize {
    (total as f64 * fraction).round() as usize
}

fn train_test(
    indices: &[usize],
    train_name: &'static str,
    test_name: &'static str,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    let n_test = round_count(indices.len(), 0.3);
    let n_train = indices.len() - n_test;
    if n_train == 0 {
        return Err(DataError::EmptyPartition(train_name));
    }
    if n_test == 0 {
        return Err(DataError::EmptyPartition(test_name));
    }
    Ok((indices[..n_train].to_vec(), indices[n_train..].to_vec()))
}

/// Partitions `0..size` after a seeded Fisher–Yates shuffle. Counts are
/// rounded to nearest; training sets take the remainder.
pub fn split_dataset(
    size: usize,
    scheme: SplitScheme,
    seed: u64,
) -> Result<SplitIndices, DataError> {
    if size < 10 {
        return Err(DataError::TooSmallToSplit(size));
    }
    let mut order: Vec<usize> = (0..size).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let n_val = round_count(size, 0.2);
    if n_val == 0 {
        return Err(DataError::EmptyPartition("validation"));
    }
    let (validation, rest) = order.split_at(n_val);
    match scheme {
        SplitScheme::Standard => {
            let (train, test) = train_test(rest, "train", "test")?;
            Ok(SplitIndices {
                validation: validation.to_vec(),
                train,
                test,
                ae: None,
            })
        }
        SplitScheme::Autoencoder => {
            let half = rest.len() / 2;
            let (ae_part, pg_part) = rest.split_at(half);
            let (ae_train, ae_test) = train_test(ae_part, "ae_train", "ae_test")?;
            let (train, test) = train_test(pg_part, "train", "test")?;
            Ok(SplitIndices {
                validation: validation.to_vec(),
                train,
                test,
                ae: Some(AePartition {
                    train: ae_train,
                    test: ae_test,
                }),
            })
        }
    }
}
