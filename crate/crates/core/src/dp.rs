//! Differential-privacy mechanics for DP-SGD.
//!
//! The accountant tracks Rényi DP of the Poisson-subsampled Gaussian mechanism
//! over a fixed grid of orders, composes additively over steps, and converts to
//! `(ε, δ)` with `ε = min_α T·rdp(α) + ln(1/δ)/(α−1)`.
//!
//! Integer orders use the binomial expansion of the moment `A_α`; fractional
//! orders use the two-sided erfc series. Everything is summed in log space.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rng::rng_from;

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_CLIP_NORM: f64 = 1.0;
pub const SIGMA_BRACKET: (f64, f64) = (1e-2, 1e3);
pub const SIGMA_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    /// Target ε (may be `f64::INFINITY` for bookkeeping only).
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: usize,
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("clip norm must be positive".into()));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::InvalidArgument("noise multiplier must be >= 0".into()));
        }
        if self.epsilon.is_finite() && self.noise_multiplier <= 0.0 {
            return Err(Error::InvalidArgument(
                "finite epsilon requires a positive noise multiplier".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidArgument("delta must lie in [0,1)".into()));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::InvalidArgument("sampling rate must lie in (0,1]".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Calibrates σ so that `steps` Poisson-subsampled steps at rate `q` spend
    /// at most `epsilon`.
    pub fn calibrated(epsilon: f64, delta: f64, clip_norm: f64, q: f64, steps: usize) -> Result<Self> {
        let noise_multiplier = calibrate_sigma(epsilon, delta, q, steps)?;
        let p = PrivacyParams {
            epsilon,
            delta,
            clip_norm,
            noise_multiplier,
            sampling_rate: q,
            steps,
        };
        p.validate()?;
        Ok(p)
    }

    /// `true` when δ is not below 1/n, the usual recommendation.
    pub fn delta_too_large(&self, n: usize) -> bool {
        self.delta >= 1.0 / n as f64
    }

    /// ε actually spent according to the accountant.
    pub fn realized_epsilon(&self) -> Result<Conversion> {
        account(self.sampling_rate, self.noise_multiplier, self.steps, self.delta)
    }
}

/// A target `(ε, δ)` plus clip norm; σ is derived per training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
}

impl PrivacyBudget {
    /// Mechanism parameters for training `n` samples under `cfg`, or `None`
    /// for ε = ∞ (plain training).
    pub fn params_for(&self, cfg: &TrainConfig, n: usize) -> Result<Option<PrivacyParams>> {
        if self.epsilon == f64::INFINITY {
            return Ok(None);
        }
        let (q, steps) = cfg.schedule(n);
        PrivacyParams::calibrated(self.epsilon, self.delta, self.clip_norm, q, steps).map(Some)
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    let plain = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if plain.is_finite() {
        return plain;
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// Scales `g` into the L2 ball of radius `c`; returns the resulting norm,
/// which never exceeds `c`.
pub fn clip_in_place(g: &mut [f64], c: f64) -> f64 {
    let norm = l2_norm(g);
    if norm <= c {
        return norm;
    }
    let mut factor = c / norm;
    loop {
        let check = l2_norm_scaled(g, factor);
        if check <= c {
            g.iter_mut().for_each(|v| *v *= factor);
            return check;
        }
        // rounding pushed the norm a hair above c
        factor = f64::from_bits(factor.to_bits() - 1);
    }
}

fn l2_norm_scaled(g: &[f64], factor: f64) -> f64 {
    g.iter().map(|v| (v * factor) * (v * factor)).sum::<f64>().sqrt()
}

pub fn clip(g: &[f64], c: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, c);
    out
}

/// In place: `sum ← (sum + N(0, σ²C² I)) / expected_batch`.
pub fn add_noise_and_scale<R: Rng>(
    sum: &mut [f64],
    clip_norm: f64,
    sigma: f64,
    expected_batch: f64,
    rng: &mut R,
) {
    let std = sigma * clip_norm;
    for v in sum.iter_mut() {
        let noise = if std > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        } else {
            0.0
        };
        *v = (*v + noise) / expected_batch;
    }
}

/// `(Σ gᵢ + N(0, σ²C² I)) / expected_batch` over already-clipped gradients.
pub fn noisy_mean(
    clipped: &[Vec<f64>],
    dim: usize,
    clip_norm: f64,
    sigma: f64,
    expected_batch: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("sigma must be >= 0".into()));
    }
    if !(expected_batch > 0.0) {
        return Err(Error::InvalidArgument("expected batch must be positive".into()));
    }
    let mut sum = vec![0.0; dim];
    for g in clipped {
        if g.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "gradient of length {} in a {dim}-dimensional mean",
                g.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    add_noise_and_scale(&mut sum, clip_norm, sigma, expected_batch, &mut rng_from(seed));
    Ok(sum)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a − e^b)` for `a ≥ b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

fn log_erfc(x: f64) -> f64 {
    if x < 20.0 {
        let v = erfc(x);
        if v > 0.0 {
            return v.ln();
        }
    }
    // asymptotic expansion of erfc for large x
    let x2 = x * x;
    -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln()
        + (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2)).ln()
}

fn ln_binom_int(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

fn log_a_int(q: f64, sigma: f64, alpha: u64) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    for i in 0..=alpha {
        let fi = i as f64;
        let term = ln_binom_int(alpha, i)
            + fi * lq
            + (alpha - i) as f64 * l1q
            + (fi * fi - fi) / (2.0 * sigma * sigma);
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_frac(q: f64, sigma: f64, alpha: f64) -> f64 {
    let mut a0 = f64::NEG_INFINITY;
    let mut a1 = f64::NEG_INFINITY;
    let z0 = sigma * sigma * (1.0 / q - 1.0).ln() + 0.5;
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let sqrt2s = std::f64::consts::SQRT_2 * sigma;
    // generalized binomial coefficient C(α, i), tracked as sign and log-magnitude
    let mut log_coef = 0.0f64;
    let mut positive = true;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let t0 = log_coef + fi * lq + j * l1q;
        let t1 = log_coef + j * lq + fi * l1q;
        let e0 = 0.5f64.ln() + log_erfc((fi - z0) / sqrt2s);
        let e1 = 0.5f64.ln() + log_erfc((z0 - j) / sqrt2s);
        let s0 = t0 + (fi * fi - fi) / (2.0 * sigma * sigma) + e0;
        let s1 = t1 + (j * j - j) / (2.0 * sigma * sigma) + e1;
        if positive {
            a0 = log_add(a0, s0);
            a1 = log_add(a1, s1);
        } else {
            a0 = log_sub(a0, s0);
            a1 = log_sub(a1, s1);
        }
        if s0.max(s1) < -30.0 || i > 100_000 {
            break;
        }
        let ratio = (alpha - fi) / (fi + 1.0);
        log_coef += ratio.abs().ln();
        if ratio < 0.0 {
            positive = !positive;
        }
        i += 1;
    }
    log_add(a0, a1)
}

/// Rényi divergence of order `alpha` for one step of the Poisson-subsampled
/// Gaussian mechanism with sampling rate `q` and noise multiplier `sigma`.
pub fn rdp_sgm(q: f64, sigma: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("RDP order must exceed 1, got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    if !(q >= 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("sampling rate {q} outside [0,1]")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(alpha / (2.0 * sigma * sigma));
    }
    let log_a = if alpha.fract() == 0.0 && alpha <= u64::MAX as f64 {
        log_a_int(q, sigma, alpha as u64)
    } else {
        log_a_frac(q, sigma, alpha)
    };
    Ok((log_a / (alpha - 1.0)).max(0.0))
}

/// Orders at which RDP is tracked.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75, 2.0, 2.5];
    orders.extend((3..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpProfile {
    pub orders: Vec<f64>,
    pub rdp_values: Vec<f64>,
}

impl RdpProfile {
    pub fn new(orders: Vec<f64>, rdp_values: Vec<f64>) -> Result<Self> {
        if orders.len() != rdp_values.len() {
            return Err(Error::InvalidArgument("orders and values differ in length".into()));
        }
        if orders.iter().any(|&a| !(a > 1.0)) {
            return Err(Error::InvalidArgument("every RDP order must exceed 1".into()));
        }
        if rdp_values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("RDP values must be non-negative".into()));
        }
        Ok(RdpProfile { orders, rdp_values })
    }

    /// Per-step profile of the subsampled Gaussian over `orders`.
    pub fn sampled_gaussian(q: f64, sigma: f64, orders: &[f64]) -> Result<Self> {
        let values = orders
            .iter()
            .map(|&a| rdp_sgm(q, sigma, a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(orders.to_vec(), values)
    }

    /// Additive composition, order by order.
    pub fn compose(&self, other: &RdpProfile) -> Result<Self> {
        if self.orders != other.orders {
            return Err(Error::InvalidArgument("cannot compose profiles over different orders".into()));
        }
        Self::new(
            self.orders.clone(),
            self.rdp_values.iter().zip(&other.rdp_values).map(|(a, b)| a + b).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conversion {
    pub epsilon: f64,
    pub order: f64,
}

/// ε after `steps` self-compositions of a per-step profile.
pub fn compose_and_convert(profile: &RdpProfile, steps: usize, delta: f64) -> Result<Conversion> {
    if profile.orders.is_empty() {
        return Err(Error::InvalidArgument("empty RDP profile".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0,1)")));
    }
    let log_inv_delta = -delta.ln();
    let mut best = Conversion {
        epsilon: f64::INFINITY,
        order: profile.orders[0],
    };
    for (&a, &r) in profile.orders.iter().zip(&profile.rdp_values) {
        let eps = steps as f64 * r + log_inv_delta / (a - 1.0);
        if eps < best.epsilon {
            best = Conversion { epsilon: eps, order: a };
        }
    }
    Ok(best)
}

/// One-shot accountant over the default order grid.
pub fn account(q: f64, sigma: f64, steps: usize, delta: f64) -> Result<Conversion> {
    let profile = RdpProfile::sampled_gaussian(q, sigma, &default_orders())?;
    compose_and_convert(&profile, steps, delta)
}

/// Smallest σ in the bracket (to [`SIGMA_RESOLUTION`]) whose accounted ε does
/// not exceed `target`.
pub fn calibrate_sigma(target: f64, delta: f64, q: f64, steps: usize) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target epsilon must be positive and finite, got {target}"
        )));
    }
    let (mut lo, mut hi) = SIGMA_BRACKET;
    let eps = |s: f64| account(q, s, steps, delta).map(|c| c.epsilon);
    if eps(hi)? > target {
        return Err(Error::Calibration(format!(
            "epsilon {target} unreachable with sigma <= {hi}; expand the bracket"
        )));
    }
    if eps(lo)? <= target {
        return Ok(lo);
    }
    while hi - lo > SIGMA_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if eps(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        assert_eq!(clip(&[2.0, 0.0], 1.0), vec![1.0, 0.0]);
        let g = vec![0.3, 0.4];
        assert_eq!(clip(&g, 1.0), g);
        assert_eq!(clip(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let big = clip(&[1e300, 1e300, 3.0], 1.0);
        assert!(l2_norm(&big) <= 1.0);
        assert!((big[0] - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_mean_is_exact() {
        let m = noisy_mean(&[vec![1.0, 2.0], vec![3.0, 4.0]], 2, 1.0, 0.0, 4.0, 0).unwrap();
        assert_eq!(m, vec![1.0, 1.5]);
    }

    #[test]
    fn empty_batch_is_pure_noise() {
        let a = noisy_mean(&[], 3, 1.0, 2.0, 10.0, 5).unwrap();
        assert!(a.iter().all(|v| *v != 0.0));
        assert_eq!(a, noisy_mean(&[], 3, 1.0, 2.0, 10.0, 5).unwrap());
    }

    #[test]
    fn gaussian_closed_form() {
        assert_eq!(rdp_sgm(1.0, 2.0, 8.0).unwrap(), 1.0);
    }

    #[test]
    fn vanishing_sampling_rate() {
        let small = rdp_sgm(1e-9, 1.0, 8.0).unwrap();
        assert!(small < 1e-15);
        assert_eq!(rdp_sgm(0.0, 1.0, 8.0).unwrap(), 0.0);
    }

    #[test]
    fn order_must_exceed_one() {
        assert!(rdp_sgm(0.1, 1.0, 1.0).is_err());
        assert!(rdp_sgm(0.1, 1.0, 0.5).is_err());
        assert!(rdp_sgm(0.1, 0.0, 2.0).is_err());
    }

    #[test]
    fn conversion_formula() {
        let p = RdpProfile::new(vec![3.0], vec![0.0]).unwrap();
        let c = compose_and_convert(&p, 1, 1e-5).unwrap();
        assert!((c.epsilon - (1e5f64).ln() / 2.0).abs() < 1e-12);
        assert_eq!(c.order, 3.0);
        assert!(compose_and_convert(&RdpProfile::new(vec![], vec![]).unwrap(), 1, 1e-5).is_err());
    }

    #[test]
    fn composition_is_additive() {
        let a = RdpProfile::sampled_gaussian(0.1, 1.0, &[2.0, 8.0]).unwrap();
        let b = a.compose(&a).unwrap();
        assert_eq!(b.rdp_values[1], 2.0 * a.rdp_values[1]);
    }

    #[test]
    fn calibration_errors() {
        assert!(calibrate_sigma(f64::INFINITY, 1e-5, 0.1, 10).is_err());
        assert!(calibrate_sigma(0.0, 1e-5, 0.1, 10).is_err());
        assert!(matches!(
            calibrate_sigma(1e-6, 1e-5, 1.0, 100_000),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn finite_epsilon_needs_noise() {
        let p = PrivacyParams {
            epsilon: 1.0,
            delta: 1e-5,
            clip_norm: 1.0,
            noise_multiplier: 0.0,
            sampling_rate: 0.1,
            steps: 10,
        };
        assert!(p.validate().is_err());
        assert!(p.delta_too_large(1_000_000));
        assert!(!p.delta_too_large(1000));
    }
}
