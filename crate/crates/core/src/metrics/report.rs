use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mann_whitney_u, mean_std, significance_stars, KCurve, MetricsError, Quartiles};
use crate::networks::{DecoderKind, ParameterCounts};
use crate::physics_loss::LossBreakdown;
use crate::trainer::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub quartiles: Quartiles,
    /// Error of every validation sample, in split order.
    pub per_sample: Vec<f64>,
}

/// Wall-clock measurements; the only part of a report that varies between identical runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds spent in the epoch loop.
    pub total_seconds: f64,
    pub seconds_per_epoch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub epochs: usize,
    pub predictive: PredictiveSummary,
    pub explanatory_error: f64,
    /// Range of the clean `u` over the whole dataset, used for the explanatory sweep.
    pub u_range: [f64; 2],
    pub parameters: ParameterCounts,
    /// Literal number of scalars the optimiser updated.
    pub trainable_parameters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_error: Option<f64>,
    pub final_train: LossBreakdown,
    pub final_test: LossBreakdown,
    pub timing: Timing,
}

impl RunReport {
    /// JSON text of the report with the `timing` object removed.
    pub fn deterministic_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("reports serialise");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("timing");
        }
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    #[serde(rename = "D")]
    pub dataset_size: usize,
    pub model: DecoderKind,
    pub runs: usize,
    /// Mean of embedding wall-clock over matched baseline wall-clock.
    pub rate_mean: f64,
    pub rate_std: f64,
    pub p_value: f64,
    pub stars: String,
}

/// Key under which an embedding run is matched with its baseline twin.
pub fn match_key(c: &RunConfig) -> String {
    format!(
        "material={} D={} mu={} m={} n={} mode={:?} seed={}",
        c.material, c.dataset_size, c.mu, c.m, c.n, c.mode, c.seed
    )
}

/// Acceleration rates of every non-baseline decoder, grouped by dataset size.
pub fn speedup_table(reports: &[RunReport]) -> Result<Vec<SpeedupRow>, MetricsError> {
    let baselines: BTreeMap<String, f64> = reports
        .iter()
        .filter(|r| r.config.decoder == DecoderKind::Baseline)
        .map(|r| (match_key(&r.config), r.timing.total_seconds))
        .collect();
    let mut groups: BTreeMap<(usize, DecoderKind), Vec<(f64, f64)>> = BTreeMap::new();
    for r in reports
        .iter()
        .filter(|r| r.config.decoder != DecoderKind::Baseline)
    {
        let key = match_key(&r.config);
        let base = *baselines
            .get(&key)
            .ok_or(MetricsError::MissingBaseline(key))?;
        groups
            .entry((r.config.dataset_size, r.config.decoder))
            .or_default()
            .push((r.timing.total_seconds, base));
    }
    groups
        .into_iter()
        .map(|((dataset_size, model), pairs)| {
            let rates: Vec<f64> = pairs.iter().map(|(e, b)| e / b).collect();
            let (rate_mean, rate_std) = mean_std(&rates)?;
            let emb: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let base: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let p_value = mann_whitney_u(&emb, &base)?.p;
            Ok(SpeedupRow {
                dataset_size,
                model,
                runs: pairs.len(),
                rate_mean,
                rate_std,
                p_value,
                stars: significance_stars(p_value).to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitRow {
    pub material: String,
    #[serde(rename = "D")]
    pub dataset_size: usize,
    pub mu: f64,
    pub n: usize,
    pub decoder: DecoderKind,
    pub seed: u64,
    pub train_loss: f64,
    pub test_loss: f64,
}

/// Final train and test totals of every run.
pub fn overfitting_points(reports: &[RunReport]) -> Vec<OverfitRow> {
    reports
        .iter()
        .map(|r| OverfitRow {
            material: r.config.material.to_string(),
            dataset_size: r.config.dataset_size,
            mu: r.config.mu,
            n: r.config.n,
            decoder: r.config.decoder,
            seed: r.config.seed,
            train_loss: r.final_train.total,
            test_loss: r.final_test.total,
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct TableRow {
    material: String,
    decoder: DecoderKind,
    #[serde(rename = "D")]
    dataset_size: usize,
    mu: f64,
    n: usize,
    #[serde(rename = "Q1")]
    q1: f64,
    #[serde(rename = "Q2")]
    q2: f64,
    #[serde(rename = "Q3")]
    q3: f64,
    eps_exp: f64,
}

/// One row per report: prediction-error quartiles and explanatory error.
pub fn write_table_csv(path: &Path, reports: &[RunReport]) -> std::io::Result<()> {
    write_rows(
        path,
        reports.iter().map(|r| TableRow {
            material: r.config.material.to_string(),
            decoder: r.config.decoder,
            dataset_size: r.config.dataset_size,
            mu: r.config.mu,
            n: r.config.n,
            q1: r.predictive.quartiles.q1,
            q2: r.predictive.quartiles.q2,
            q3: r.predictive.quartiles.q3,
            eps_exp: r.explanatory_error,
        }),
    )
}

pub fn write_speedup_csv(path: &Path, rows: &[SpeedupRow]) -> std::io::Result<()> {
    write_rows(path, rows)
}

pub fn write_overfit_csv(path: &Path, rows: &[OverfitRow]) -> std::io::Result<()> {
    write_rows(path, rows)
}

#[derive(Serialize)]
struct KRow {
    u: f64,
    #[serde(rename = "K_true")]
    k_true: f64,
    #[serde(rename = "K_hat")]
    k_hat: f64,
}

pub fn write_kcurve_csv(path: &Path, curve: &KCurve) -> std::io::Result<()> {
    write_rows(
        path,
        curve
            .u
            .iter()
            .zip(&curve.k_true)
            .zip(&curve.k_hat)
            .map(|((&u, &k_true), &k_hat)| KRow { u, k_true, k_hat }),
    )
}
