use super::tensor::Tensor2;

/// Compares an analytic gradient with central finite differences.
///
/// `f` returns the scalar value and its autodiff gradient at a point. The
/// result is `max_i |fd_i - ad_i| / max(|ad_i|, 1e-8)` where `ad` is the
/// gradient at `point`.
pub fn finite_difference_check<E>(
    mut f: impl FnMut(&Tensor2) -> Result<(f64, Tensor2), E>,
    point: &Tensor2,
    step: f64,
) -> Result<f64, E> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let (_, analytic) = f(point)?;
    assert_eq!(
        analytic.shape(),
        point.shape(),
        "gradient shape differs from point"
    );
    let mut probe = point.clone();
    let mut worst = 0.0_f64;
    for i in 0..point.len() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + step;
        let (plus, _) = f(&probe)?;
        probe.data_mut()[i] = x0 - step;
        let (minus, _) = f(&probe)?;
        probe.data_mut()[i] = x0;
        let numeric = (plus - minus) / (2.0 * step);
        let ad = analytic.data()[i];
        let err = (numeric - ad).abs() / ad.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
