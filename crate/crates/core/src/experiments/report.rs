//! CSV renderings of campaign and game output.
//!
//! Floats use Rust's shortest round-trip formatting, infinities print as
//! `inf`, and missing values are empty cells, so equal results give equal bytes.

use crate::error::{Error, Result};

use super::bounds::{bound_erlingsson, bound_new, bound_yeom};
use super::campaign::{CampaignResult, TraceSet};
use super::games::{GameRecord, GameSummary};

pub const RESULTS_HEADER: [&str; 12] = [
    "epsilon",
    "attack",
    "scenario",
    "repetition",
    "tpr",
    "fpr",
    "advantage",
    "member_acc",
    "nonmember_acc",
    "validation_acc",
    "sigma",
    "realized_epsilon",
];

pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn render<I, R>(header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv write: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn results_csv(result: &CampaignResult) -> Result<String> {
    render(
        &RESULTS_HEADER,
        result.records.iter().map(|r| {
            vec![
                fmt_f64(r.epsilon),
                r.attack.name().to_string(),
                r.scenario.name().to_string(),
                r.repetition.to_string(),
                fmt_f64(r.tpr),
                fmt_f64(r.fpr),
                fmt_f64(r.advantage),
                fmt_f64(r.member_acc),
                fmt_f64(r.nonmember_acc),
                opt(r.validation_acc),
                opt(r.sigma),
                opt(r.realized_epsilon),
            ]
        }),
    )
}

pub fn summary_csv(result: &CampaignResult) -> Result<String> {
    render(
        &[
            "epsilon",
            "attack",
            "scenario",
            "repetitions",
            "mean_advantage",
            "ci95_half_width",
            "mean_tpr",
            "mean_fpr",
            "mean_member_acc",
            "mean_nonmember_acc",
            "mean_validation_acc",
        ],
        result.summaries.iter().map(|s| {
            vec![
                fmt_f64(s.epsilon),
                s.attack.name().to_string(),
                s.scenario.name().to_string(),
                s.repetitions.to_string(),
                fmt_f64(s.mean_advantage),
                opt(s.ci_half_width),
                fmt_f64(s.mean_tpr),
                fmt_f64(s.mean_fpr),
                fmt_f64(s.mean_member_acc),
                fmt_f64(s.mean_nonmember_acc),
                opt(s.mean_validation_acc),
            ]
        }),
    )
}

/// All three bounds for every ε; `yeom` ignores δ.
pub fn bounds_csv(epsilons: &[f64], delta: f64) -> Result<String> {
    let mut rows = Vec::new();
    for &e in epsilons {
        for (name, value) in [
            ("yeom", bound_yeom(e)),
            ("erlingsson", bound_erlingsson(e, delta)),
            ("new", bound_new(e, delta)),
        ] {
            rows.push(vec![fmt_f64(e), fmt_f64(delta), name.to_string(), fmt_f64(value)]);
        }
    }
    render(&["epsilon", "delta", "bound_name", "value"], rows)
}

pub fn trace_csv(trace: &TraceSet) -> Result<String> {
    render(
        &["sample_id", "truth", "loss", "decision", "attack_name"],
        trace.rows.iter().map(|r| {
            vec![
                r.sample_id.to_string(),
                r.truth.to_string(),
                fmt_f64(r.loss),
                r.decision.to_string(),
                r.attack_name.to_string(),
            ]
        }),
    )
}

/// File name for a trace set, unique per (repetition, ε, scenario).
pub fn trace_file_name(trace: &TraceSet) -> String {
    format!(
        "trace_rep{}_eps{}_{}.csv",
        trace.repetition,
        fmt_f64(trace.epsilon),
        trace.scenario.name()
    )
}

pub fn games_csv(records: &[GameRecord]) -> Result<String> {
    render(
        &["epsilon", "attack", "repetition", "success"],
        records.iter().map(|r| {
            vec![
                fmt_f64(r.epsilon),
                r.attack.to_string(),
                r.repetition.to_string(),
                u8::from(r.success).to_string(),
            ]
        }),
    )
}

pub fn game_summary_csv(summaries: &[GameSummary]) -> Result<String> {
    render(
        &["epsilon", "attack", "games", "success_rate", "advantage", "ci95_half_width"],
        summaries.iter().map(|s| {
            vec![
                fmt_f64(s.epsilon),
                s.attack.to_string(),
                s.games.to_string(),
                fmt_f64(s.success_rate),
                fmt_f64(s.advantage),
                opt(s.ci_half_width),
            ]
        }),
    )
}
