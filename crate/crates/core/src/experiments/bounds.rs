//! Upper bounds on membership advantage for an (ε, δ)-DP training algorithm.
//!
//! All three are written in terms of `e^{-ε}` so they stay finite for ε = ∞.

/// `min(e^ε − 1, 1)`; holds for (ε, 0)-DP.
pub fn bound_yeom(epsilon: f64) -> f64 {
    epsilon.exp_m1().min(1.0)
}

/// `1 − e^{−ε}(1 − δ)`.
pub fn bound_erlingsson(epsilon: f64, delta: f64) -> f64 {
    -(-epsilon).exp_m1() + delta * (-epsilon).exp()
}

/// `(e^ε − 1 + 2δ) / (e^ε + 1)`.
pub fn bound_new(epsilon: f64, delta: f64) -> f64 {
    let t = (-epsilon).exp();
    (-(-epsilon).exp_m1() + 2.0 * delta * t) / (1.0 + t)
}

/// Whether `(tpr, fpr)` lies in the region any (ε, δ)-DP mechanism permits:
/// `FPR + e^ε(1 − TPR) ≥ 1 − δ` and `(1 − TPR) + e^ε·FPR ≥ 1 − δ`.
pub fn tradeoff_feasible(tpr: f64, fpr: f64, epsilon: f64, delta: f64) -> bool {
    let e = epsilon.exp();
    fpr + e * (1.0 - tpr) >= 1.0 - delta && (1.0 - tpr) + e * fpr >= 1.0 - delta
}
