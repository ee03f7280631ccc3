use super::*;
use crate::networks::{
    DecoderAttachment, DecoderKind, ExplanatorySpec, ModelSpec, ParamGroup, PredictiveSpec,
};
use crate::rng::SplitMix64;
use proptest::prelude::*;

fn field(seed: u64) -> Field {
    let mut rng = SplitMix64::new(seed);
    Tensor2::from_vec(6, 6, (0..36).map(|_| rng.uniform_range(0.1, 1.0)).collect())
}

#[test]
fn predictive_error_examples() {
    let u = field(1);
    assert_eq!(predictive_error(&u, &u).unwrap(), 0.0);
    let scaled = u.map(|v| 1.1 * v);
    assert!((predictive_error(&scaled, &u).unwrap() - 0.1).abs() < 1e-14);
    let zero = Tensor2::zeros(6, 6);
    assert!((predictive_error(&zero, &u).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(
        predictive_error(&u, &zero),
        Err(MetricsError::ZeroReference)
    );
    assert!(predictive_error(&Tensor2::zeros(5, 5), &u).is_err());
}

#[test]
fn predictive_error_uses_trapezoid_weights() {
    // Only a corner differs: its weight is a quarter of an interior node's.
    let u = Tensor2::filled(3, 3, 1.0);
    let mut corner = u.clone();
    corner.set(0, 0, 2.0);
    let mut centre = u.clone();
    centre.set(1, 1, 2.0);
    let total = 4.0 * 0.25 + 4.0 * 0.5 + 1.0;
    assert!((predictive_error(&corner, &u).unwrap() - (0.25f64 / total).sqrt()).abs() < 1e-15);
    assert!((predictive_error(&centre, &u).unwrap() - (1.0f64 / total).sqrt()).abs() < 1e-15);
}

fn model_with_output_bias(scale_to: Option<f64>) -> Model {
    let spec = ModelSpec {
        predictive: PredictiveSpec::new(5, 3, DecoderKind::Baseline),
        explanatory: ExplanatorySpec::default(),
    };
    let mut m = Model::new(spec, 0, DecoderAttachment::None).unwrap();
    for p in m
        .params
        .iter_mut()
        .filter(|p| p.group == ParamGroup::Explanatory)
    {
        p.value = p.value.map(|_| 0.0);
    }
    if let Some(b) = scale_to {
        let last = m
            .params
            .iter_mut()
            .rev()
            .find(|p| p.group == ParamGroup::Explanatory)
            .unwrap();
        last.value = Tensor2::filled(1, 1, b);
    }
    m
}

#[test]
fn explanatory_error_examples() {
    // A zero network predicts K = 0 everywhere.
    let zero = model_with_output_bias(None);
    let e = explanatory_error(&zero, Material::Material1, 0.1, 0.9, 101).unwrap();
    assert!((e - 1.0).abs() < 1e-15);
    // Constant K = 2 against the constant-free law of material 2 over a range.
    let two = model_with_output_bias(Some(2.0));
    let c = k_curve(&two, Material::Material2, 0.2, 0.8, 51).unwrap();
    assert!(c.k_hat.iter().all(|&k| k == 2.0));
    assert!(k_curve(&two, Material::Material1, 0.5, 0.5, 11).is_err());
    assert!(k_curve(&two, Material::Material1, 0.1, 0.5, 1).is_err());
}

#[test]
fn curve_error_is_zero_for_exact_law_and_one_for_double() {
    let u: Vec<f64> = (0..11).map(|i| 0.1 + 0.08 * i as f64).collect();
    let k_true: Vec<f64> = u
        .iter()
        .map(|&v| Material::Material1.conductivity(v))
        .collect();
    let exact = KCurve {
        u: u.clone(),
        k_true: k_true.clone(),
        k_hat: k_true.clone(),
    };
    assert_eq!(curve_error(&exact).unwrap(), 0.0);
    let double = KCurve {
        k_hat: k_true.iter().map(|k| 2.0 * k).collect(),
        ..exact
    };
    assert!((curve_error(&double).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn quartile_examples() {
    let q = quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!((q.q1, q.q2, q.q3), (2.0, 3.0, 4.0));
    let q = quartiles(&[7.0]).unwrap();
    assert_eq!((q.q1, q.q2, q.q3), (7.0, 7.0, 7.0));
    let q = quartiles(&[10.0, 0.0]).unwrap();
    assert_eq!((q.q1, q.q2, q.q3), (2.5, 5.0, 7.5));
    assert_eq!(quartiles(&[]), Err(MetricsError::Empty));
}

#[test]
fn mann_whitney_examples() {
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.u, 0.0);
    let same = mann_whitney_u(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(same.p >= 0.99);
    let flat = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
    assert_eq!(flat.p, 1.0);
    assert!(mann_whitney_u(&[], &[1.0]).is_err());
}

#[test]
fn mann_whitney_matches_hand_computed_ties() {
    // Pooled ranks: 1, 2.5, 2.5, 4, 5 with a = {1, 2, 3}.
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[2.0, 4.0]).unwrap();
    assert_eq!(r.u, 1.5);
    let var = 6.0 / 12.0 * (6.0 - 6.0 / 20.0);
    let z: f64 = (1.5 - 3.0) / f64::sqrt(var);
    let expected = 2.0 * Normal::standard().cdf(z);
    assert!((r.p - expected).abs() < 1e-14);
}

#[test]
fn mann_whitney_detects_shifted_samples() {
    let mut rng = SplitMix64::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.normal() + 3.0).collect();
        worst = worst.max(mann_whitney_u(&a, &b).unwrap().p);
    }
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn stars_thresholds() {
    assert_eq!(significance_stars(0.2), "");
    assert_eq!(significance_stars(0.04), "*");
    assert_eq!(significance_stars(0.005), "**");
    assert_eq!(significance_stars(0.0001), "***");
}

use statrs::distribution::{ContinuousCDF, Normal};

proptest! {
    #[test]
    fn predictive_error_is_scale_invariant(seed in 0u64..1000, alpha in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        let u = field(seed);
        let p = field(seed + 7);
        let e = predictive_error(&p, &u).unwrap();
        let es = predictive_error(&p.map(|v| alpha * v), &u.map(|v| alpha * v)).unwrap();
        prop_assert!((e - es).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn mann_whitney_is_symmetric(a in prop::collection::vec(0.0..10.0f64, 1..12), b in prop::collection::vec(0.0..10.0f64, 1..12)) {
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
    }

    #[test]
    fn q3_does_not_decrease_when_adding_a_large_value(v in prop::collection::vec(-10.0..10.0f64, 1..20), extra in 0.0..5.0f64) {
        let q = quartiles(&v).unwrap();
        let mut w = v.clone();
        w.push(q.q3 + extra);
        let q2 = quartiles(&w).unwrap();
        prop_assert!(q.q1 <= q.q2 && q.q2 <= q.q3);
        prop_assert!(q2.q3 >= q.q3);
    }
}
