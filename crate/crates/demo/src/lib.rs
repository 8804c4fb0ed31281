//! Browser bindings for the static demo page. Every export returns a JSON
//! string; the `*_json` functions hold the logic so they can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use mialab::attacks::optimal_threshold;
use mialab::dp;
use mialab::experiments::{bound_erlingsson, bound_new, bound_yeom};

pub fn bound_curves_json(delta: f64, eps_max: f64, points: usize) -> Result<String, String> {
    if !(0.0..1.0).contains(&delta) {
        return Err("delta must lie in [0, 1)".into());
    }
    if !(eps_max > 0.0 && eps_max.is_finite()) || points < 2 {
        return Err("need a positive finite eps_max and at least 2 points".into());
    }
    let eps: Vec<f64> = (0..points)
        .map(|i| eps_max * i as f64 / (points - 1) as f64)
        .collect();
    Ok(json!({
        "epsilon": eps,
        "yeom": eps.iter().map(|&e| bound_yeom(e)).collect::<Vec<_>>(),
        "erlingsson": eps.iter().map(|&e| bound_erlingsson(e, delta)).collect::<Vec<_>>(),
        "new": eps.iter().map(|&e| bound_new(e, delta)).collect::<Vec<_>>(),
    })
    .to_string())
}

/// Accounts `sigma` when positive, otherwise calibrates σ for `target_epsilon`.
pub fn account_json(q: f64, steps: usize, delta: f64, sigma: f64, target_epsilon: f64) -> Result<String, String> {
    let sigma = if sigma > 0.0 {
        sigma
    } else {
        dp::calibrate_sigma(target_epsilon, delta, q, steps).map_err(|e| e.to_string())?
    };
    let c = dp::account(q, sigma, steps, delta).map_err(|e| e.to_string())?;
    Ok(json!({ "sigma": sigma, "epsilon": c.epsilon, "order": c.order }).to_string())
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: `{s}`")))
        .collect()
}

/// Best loss threshold for two pasted loss lists, plus the full ROC sweep.
pub fn threshold_sweep_json(member_losses: &str, nonmember_losses: &str) -> Result<String, String> {
    let members = parse_list(member_losses)?;
    let nonmembers = parse_list(nonmember_losses)?;
    let (tau, outcome) = optimal_threshold(&members, &nonmembers).map_err(|e| e.to_string())?;
    let mut cuts: Vec<f64> = members.iter().chain(&nonmembers).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let rate = |v: &[f64], t: f64| v.iter().filter(|&&l| l < t).count() as f64 / v.len() as f64;
    let roc: Vec<[f64; 2]> = std::iter::once(f64::NEG_INFINITY)
        .chain(cuts.iter().map(|&c| c.next_up()))
        .map(|t| [rate(&nonmembers, t), rate(&members, t)])
        .collect();
    Ok(json!({
        "tau": if tau.is_finite() { json!(tau) } else { json!(tau.to_string()) },
        "tpr": outcome.tpr,
        "fpr": outcome.fpr,
        "advantage": outcome.advantage,
        "roc": roc,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn bound_curves(delta: f64, eps_max: f64, points: usize) -> Result<String, JsValue> {
    bound_curves_json(delta, eps_max, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn account(q: f64, steps: usize, delta: f64, sigma: f64, target_epsilon: f64) -> Result<String, JsValue> {
    account_json(q, steps, delta, sigma, target_epsilon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn threshold_sweep(member_losses: &str, nonmember_losses: &str) -> Result<String, JsValue> {
    threshold_sweep_json(member_losses, nonmember_losses).map_err(|e| JsValue::from_str(&e))
}
