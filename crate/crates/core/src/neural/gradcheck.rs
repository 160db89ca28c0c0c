/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn numeric_gradient<F>(f: F, params: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut theta = params.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + h;
            let plus = f(&theta);
            theta[i] = orig - h;
            let minus = f(&theta);
            theta[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − n| / max(|a|, |n|, 1e-8)` over all coordinates.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
}

/// Compares an analytic gradient with central differences of `compute_loss`.
pub fn grad_check<F>(compute_loss: F, params: &[f64], analytic: &[f64], h: f64) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    let numeric = numeric_gradient(compute_loss, params, h);
    let mut worst = None;
    let mut max = 0.0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        if e > max || worst.is_none() {
            max = e.max(max);
            worst = Some(i);
        }
    }
    GradCheckReport {
        max_relative_error: max,
        worst_index: worst,
        numeric,
    }
}
