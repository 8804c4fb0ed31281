//! Batch mixture-model campaign: many repetitions of draw, train, attack,
//! each evaluated on the non-IID split and on its IID counterfactual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    average_threshold_losses, optimal_threshold, shadow_attack, train_shadow_ensemble, AttackKind,
    AttackOutcome, Membership, ShadowConfig, ShadowEnsemble,
};
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel, TrainConfig};
use crate::rng::derive_seed;
use crate::splits::{draw, iid_counterfactual, MixturePools, SplitDraw};

use super::stats::{ci95_half_width, mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NonIid,
    Iid,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::NonIid => "non_iid",
            Scenario::Iid => "iid",
        }
    }
}

/// Fully resolved campaign parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub n: usize,
    pub m: usize,
    /// `f64::INFINITY` means non-private training.
    pub epsilon_grid: Vec<f64>,
    pub delta: f64,
    pub repetitions: usize,
    pub attacks: Vec<AttackKind>,
    /// Full layer widths, input to classes.
    pub arch: Vec<usize>,
    pub train: TrainConfig,
    pub clip_norm: f64,
    pub shadow: ShadowConfig,
    pub shadow_cap: Option<usize>,
    pub seed: u64,
    pub export_traces: bool,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be >= 1");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1");
        }
        if self.epsilon_grid.is_empty() {
            return bad("epsilon grid is empty");
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0)) {
            return bad("every epsilon must be positive");
        }
        if self.attacks.is_empty() {
            return bad("no attacks selected");
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad("delta must lie in [0,1)");
        }
        if self.arch.len() < 2 {
            return bad("architecture needs input and output widths");
        }
        self.train.validate(self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionRecord {
    pub epsilon: f64,
    pub attack: AttackKind,
    pub scenario: Scenario,
    pub repetition: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub advantage: f64,
    pub member_acc: f64,
    pub nonmember_acc: f64,
    pub validation_acc: Option<f64>,
    pub sigma: Option<f64>,
    pub realized_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub attack: AttackKind,
    pub scenario: Scenario,
    pub repetitions: usize,
    pub mean_advantage: f64,
    /// 95% Student-t half-width; `None` for a single repetition.
    pub ci_half_width: Option<f64>,
    pub mean_tpr: f64,
    pub mean_fpr: f64,
    pub mean_member_acc: f64,
    pub mean_nonmember_acc: f64,
    pub mean_validation_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub sample_id: usize,
    pub truth: u8,
    pub loss: f64,
    pub decision: u8,
    pub attack_name: &'static str,
}

/// Per-sample decisions of every attack for one (repetition, ε, scenario).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub repetition: usize,
    pub epsilon: f64,
    pub scenario: Scenario,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignResult {
    pub records: Vec<RepetitionRecord>,
    pub summaries: Vec<SummaryRow>,
    pub traces: Vec<TraceSet>,
    /// Non-fatal conditions, e.g. skipped shadow attacks.
    pub notes: Vec<String>,
}

struct RepOutput {
    records: Vec<RepetitionRecord>,
    traces: Vec<TraceSet>,
    notes: Vec<String>,
}

/// Runs `spec.repetitions` independent repetitions on up to `jobs` threads.
/// Output is identical for any `jobs`.
pub fn batch_mm_campaign(spec: &CampaignSpec, pools: &MixturePools, jobs: usize) -> Result<CampaignResult> {
    spec.validate()?;
    pools.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outputs: Vec<RepOutput> = pool.install(|| {
        (0..spec.repetitions)
            .into_par_iter()
            .map(|r| run_repetition(spec, pools, r))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut result = CampaignResult::default();
    for out in outputs {
        result.records.extend(out.records);
        result.traces.extend(out.traces);
        for n in out.notes {
            if !result.notes.contains(&n) {
                result.notes.push(n);
            }
        }
    }
    result.summaries = summarize(spec, &result.records);
    Ok(result)
}

fn run_repetition(spec: &CampaignSpec, pools: &MixturePools, r: usize) -> Result<RepOutput> {
    let rep_seed = derive_seed(spec.seed, &[r as u64]);
    let non_iid = draw(pools, spec.n, spec.m, spec.shadow_cap, derive_seed(rep_seed, &[1]))?;
    let iid = iid_counterfactual(&non_iid, derive_seed(rep_seed, &[2]));
    let mut out = RepOutput {
        records: Vec::new(),
        traces: Vec::new(),
        notes: Vec::new(),
    };

    for (ei, &epsilon) in spec.epsilon_grid.iter().enumerate() {
        let budget = PrivacyBudget {
            epsilon,
            delta: spec.delta,
            clip_norm: spec.clip_norm,
        };
        let privacy = budget.params_for(&spec.train, spec.n)?;
        let (sigma, realized) = match &privacy {
            Some(p) => (Some(p.noise_multiplier), Some(p.realized_epsilon()?.epsilon)),
            None => (None, None),
        };

        // both scenarios share the adversary's pool, so one ensemble serves both
        let ensemble = if spec.attacks.contains(&AttackKind::Shadow) {
            match train_shadow_ensemble(
                &non_iid.shadow_pool,
                &spec.arch,
                &spec.train,
                Some(&budget),
                &spec.shadow,
                spec.n,
                derive_seed(rep_seed, &[4, ei as u64]),
            ) {
                Ok(e) => Some(e),
                Err(Error::ShadowSkipped { needed, available }) => {
                    out.notes.push(format!(
                        "shadow attack skipped: pool has {available} samples, needs {needed}"
                    ));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        for (scenario, split) in [(Scenario::NonIid, &non_iid), (Scenario::Iid, &iid)] {
            let s_seed = derive_seed(rep_seed, &[3, ei as u64, scenario as u64]);
            let init = nn::init_model(&spec.arch, derive_seed(s_seed, &[0]))?;
            let cfg = TrainConfig {
                seed: derive_seed(s_seed, &[1]),
                ..spec.train
            };
            let model = nn::train(&init, &split.members, &cfg, privacy.as_ref())?;
            let eval = evaluate(spec, &model, split, ensemble.as_ref())?;
            let member_acc = nn::accuracy(&model, &split.members)?;
            let nonmember_acc = nn::accuracy(&model, &split.nonmembers)?;
            let validation_acc = match &pools.validation {
                Some(v) if !v.is_empty() => Some(nn::accuracy(&model, v)?),
                _ => None,
            };
            let mut trace_rows = Vec::new();
            for (kind, outcome) in &eval.outcomes {
                out.records.push(RepetitionRecord {
                    epsilon,
                    attack: *kind,
                    scenario,
                    repetition: r,
                    tpr: outcome.tpr,
                    fpr: outcome.fpr,
                    advantage: outcome.advantage,
                    member_acc,
                    nonmember_acc,
                    validation_acc,
                    sigma,
                    realized_epsilon: realized,
                });
                if spec.export_traces {
                    for (i, (d, t)) in outcome.decisions.iter().zip(&outcome.truth).enumerate() {
                        trace_rows.push(TraceRow {
                            sample_id: eval.ids[i],
                            truth: t.bit(),
                            loss: eval.losses[i],
                            decision: d.bit(),
                            attack_name: kind.name(),
                        });
                    }
                }
            }
            if spec.export_traces {
                out.traces.push(TraceSet {
                    repetition: r,
                    epsilon,
                    scenario,
                    rows: trace_rows,
                });
            }
        }
    }
    Ok(out)
}

struct Evaluation {
    ids: Vec<usize>,
    losses: Vec<f64>,
    outcomes: Vec<(AttackKind, AttackOutcome)>,
}

/// Evaluates every configured attack on members followed by non-members.
fn evaluate(
    spec: &CampaignSpec,
    model: &MlpModel,
    split: &SplitDraw,
    ensemble: Option<&ShadowEnsemble>,
) -> Result<Evaluation> {
    let member_losses = model.loglosses(&split.members)?;
    let nonmember_losses = model.loglosses(&split.nonmembers)?;
    let samples: Vec<_> = split.members.iter().chain(&split.nonmembers).cloned().collect();
    let truth: Vec<Membership> = std::iter::repeat(Membership::Member)
        .take(split.members.len())
        .chain(std::iter::repeat(Membership::NonMember).take(split.nonmembers.len()))
        .collect();
    let losses: Vec<f64> = member_losses.iter().chain(&nonmember_losses).copied().collect();

    let mut outcomes = Vec::new();
    for &kind in &spec.attacks {
        let outcome = match kind {
            AttackKind::AverageThreshold => average_threshold_losses(&member_losses, &losses, &truth)?,
            AttackKind::OptimalThreshold => optimal_threshold(&member_losses, &nonmember_losses)?.1,
            AttackKind::Shadow => match ensemble {
                Some(e) => shadow_attack(e, model, &samples, &truth)?,
                None => continue,
            },
        };
        outcomes.push((kind, outcome));
    }
    Ok(Evaluation {
        ids: samples.iter().map(|s| s.id).collect(),
        losses,
        outcomes,
    })
}

fn summarize(spec: &CampaignSpec, records: &[RepetitionRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &epsilon in &spec.epsilon_grid {
        for &attack in &spec.attacks {
            for scenario in [Scenario::NonIid, Scenario::Iid] {
                let group: Vec<&RepetitionRecord> = records
                    .iter()
                    .filter(|r| r.epsilon == epsilon && r.attack == attack && r.scenario == scenario)
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let col = |f: fn(&RepetitionRecord) -> f64| -> Vec<f64> { group.iter().map(|r| f(r)).collect() };
                let adv = col(|r| r.advantage);
                let validation: Option<Vec<f64>> = group.iter().map(|r| r.validation_acc).collect();
                rows.push(SummaryRow {
                    epsilon,
                    attack,
                    scenario,
                    repetitions: group.len(),
                    mean_advantage: mean(&adv),
                    ci_half_width: ci95_half_width(&adv),
                    mean_tpr: mean(&col(|r| r.tpr)),
                    mean_fpr: mean(&col(|r| r.fpr)),
                    mean_member_acc: mean(&col(|r| r.member_acc)),
                    mean_nonmember_acc: mean(&col(|r| r.nonmember_acc)),
                    mean_validation_acc: validation.map(|v| mean(&v)),
                });
            }
        }
    }
    rows
}

impl CampaignResult {
    pub fn summary(&self, epsilon: f64, attack: AttackKind, scenario: Scenario) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.epsilon == epsilon && s.attack == attack && s.scenario == scenario)
    }
}
