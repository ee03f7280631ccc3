//! Evaluation of trained models and aggregation of many runs.

mod report;
mod stats;

pub use report::{
    match_key, overfitting_points, speedup_table, write_kcurve_csv, write_overfit_csv,
    write_speedup_csv, write_table_csv, OverfitRow, PredictiveSummary, RunReport, SpeedupRow,
    Timing,
};
pub use stats::{mann_whitney_u, mean_std, quartiles, significance_stars, MannWhitney, Quartiles};

use crate::autodiff::Tensor2;
use crate::data_gen::{Field, Material};
use crate::networks::Model;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("reference has zero norm")]
    ZeroReference,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no values to summarise")]
    Empty,
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("no baseline run matches {0}")]
    MissingBaseline(String),
}

/// Trapezoidal weights for `count` equispaced points on `[0, 1]`, up to the common factor `h`.
fn trapezoid_weights(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| if i == 0 || i + 1 == count { 0.5 } else { 1.0 })
        .collect()
}

/// Relative L2 error of `u_hat` against `u` on the unit square, both integrals
/// by the two-dimensional trapezoidal rule on the grid nodes.
pub fn predictive_error(u_hat: &Field, u: &Field) -> Result<f64, MetricsError> {
    if u_hat.shape() != u.shape() {
        return Err(MetricsError::Shape(format!(
            "prediction is {:?}, reference is {:?}",
            u_hat.shape(),
            u.shape()
        )));
    }
    let (rows, cols) = u.shape();
    let (wr, wc) = (trapezoid_weights(rows), trapezoid_weights(cols));
    let (mut num, mut den) = (0.0, 0.0);
    for (r, a) in wr.iter().enumerate() {
        for (c, b) in wc.iter().enumerate() {
            let w = a * b;
            let (p, t) = (u_hat.get(r, c), u.get(r, c));
            num += w * (p - t) * (p - t);
            den += w * t * t;
        }
    }
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Points of the learned constitutive curve on `resolution` equispaced values of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct KCurve {
    pub u: Vec<f64>,
    pub k_true: Vec<f64>,
    pub k_hat: Vec<f64>,
}

pub fn k_curve(
    model: &Model,
    material: Material,
    u_min: f64,
    u_max: f64,
    resolution: usize,
) -> Result<KCurve, MetricsError> {
    if resolution < 2 || u_min >= u_max || !u_min.is_finite() || !u_max.is_finite() {
        return Err(MetricsError::Sweep(format!(
            "need u_min < u_max and at least two points, got [{u_min}, {u_max}] with {resolution}"
        )));
    }
    let step = (u_max - u_min) / (resolution - 1) as f64;
    let u: Vec<f64> = (0..resolution).map(|i| u_min + step * i as f64).collect();
    let k_true = u.iter().map(|&v| material.conductivity(v)).collect();
    let k_hat = model.explain_values(&Tensor2::column(u.clone())).into_vec();
    Ok(KCurve { u, k_true, k_hat })
}

/// Relative L2 error of the learned `K(u)` against the material law over
/// `[u_min, u_max]`, trapezoidal rule on `resolution` points.
pub fn explanatory_error(
    model: &Model,
    material: Material,
    u_min: f64,
    u_max: f64,
    resolution: usize,
) -> Result<f64, MetricsError> {
    curve_error(&k_curve(model, material, u_min, u_max, resolution)?)
}

pub fn curve_error(curve: &KCurve) -> Result<f64, MetricsError> {
    let w = trapezoid_weights(curve.u.len());
    let (mut num, mut den) = (0.0, 0.0);
    for ((wi, t), p) in w.iter().zip(&curve.k_true).zip(&curve.k_hat) {
        num += wi * (p - t) * (p - t);
        den += wi * t * t;
    }
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests;
