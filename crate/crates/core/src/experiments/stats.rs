//! Small statistics helpers for aggregating repetitions.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; `None` below two values.
pub fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    Some(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
}

/// Half-width of the 95% Student-t confidence interval for the mean.
pub fn ci95_half_width(values: &[f64]) -> Option<f64> {
    let var = sample_variance(values)?;
    let df = (values.len() - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, df).ok()?.inverse_cdf(0.975);
    Some(t * (var / values.len() as f64).sqrt())
}

/// Two-sided p-value of the pooled two-proportion z-test.
pub fn two_proportion_p_value(success_a: usize, n_a: usize, success_b: usize, n_b: usize) -> f64 {
    let pa = success_a as f64 / n_a as f64;
    let pb = success_b as f64 / n_b as f64;
    let pooled = (success_a + success_b) as f64 / (n_a + n_b) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64)).sqrt();
    if se == 0.0 {
        return if pa == pb { 1.0 } else { 0.0 };
    }
    let z = (pa - pb).abs() / se;
    2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z))
}
