//! Off-the-shelf membership inference attacks and the advantage metric.
//!
//! Bit convention throughout: `0` = member, `1` = non-member, both for the
//! attack's decision and for the ground truth.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataio::Sample;
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel, TrainConfig};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Membership {
    Member,
    NonMember,
}

impl Membership {
    pub fn bit(self) -> u8 {
        match self {
            Membership::Member => 0,
            Membership::NonMember => 1,
        }
    }

    pub fn from_bit(b: u8) -> Self {
        if b == 0 {
            Membership::Member
        } else {
            Membership::NonMember
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    AverageThreshold,
    OptimalThreshold,
    Shadow,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::AverageThreshold => "average_threshold",
            AttackKind::OptimalThreshold => "optimal_threshold",
            AttackKind::Shadow => "shadow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
    pub advantage: f64,
}

/// TPR over true members, FPR over true non-members, advantage = TPR − FPR.
pub fn advantage(decisions: &[Membership], truth: &[Membership]) -> Result<Rates> {
    if decisions.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} decisions for {} truth bits",
            decisions.len(),
            truth.len()
        )));
    }
    let (mut tp, mut pos, mut fp, mut neg) = (0u64, 0u64, 0u64, 0u64);
    for (d, t) in decisions.iter().zip(truth) {
        match t {
            Membership::Member => {
                pos += 1;
                tp += u64::from(*d == Membership::Member);
            }
            Membership::NonMember => {
                neg += 1;
                fp += u64::from(*d == Membership::Member);
            }
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "advantage needs both members and non-members in the truth".into(),
        ));
    }
    let tpr = tp as f64 / pos as f64;
    let fpr = fp as f64 / neg as f64;
    Ok(Rates {
        tpr,
        fpr,
        advantage: tpr - fpr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub decisions: Vec<Membership>,
    pub truth: Vec<Membership>,
    pub tpr: f64,
    pub fpr: f64,
    pub advantage: f64,
}

impl AttackOutcome {
    pub fn new(decisions: Vec<Membership>, truth: Vec<Membership>) -> Result<Self> {
        let r = advantage(&decisions, &truth)?;
        Ok(AttackOutcome {
            decisions,
            truth,
            tpr: r.tpr,
            fpr: r.fpr,
            advantage: r.advantage,
        })
    }
}

/// Member claim iff `loss < tau`.
pub fn threshold_decision(loss: f64, tau: f64) -> Membership {
    if loss < tau {
        Membership::Member
    } else {
        Membership::NonMember
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Threshold at the mean training loss, applied to precomputed losses.
pub fn average_threshold_losses(
    train_losses: &[f64],
    losses: &[f64],
    truth: &[Membership],
) -> Result<AttackOutcome> {
    if train_losses.is_empty() {
        return Err(Error::InvalidArgument("no training losses".into()));
    }
    let tau = mean(train_losses);
    AttackOutcome::new(
        losses.iter().map(|&l| threshold_decision(l, tau)).collect(),
        truth.to_vec(),
    )
}

pub fn average_threshold(
    model: &MlpModel,
    train_losses: &[f64],
    samples: &[Sample],
    truth: &[Membership],
) -> Result<AttackOutcome> {
    average_threshold_losses(train_losses, &model.loglosses(samples)?, truth)
}

/// Best `loss < τ` rule on the observed member/non-member losses.
///
/// Candidates are −∞, the midpoints between consecutive distinct pooled
/// losses, and +∞. The smallest maximizing τ wins. Decisions are returned in
/// order: members first, then non-members.
pub fn optimal_threshold(member_losses: &[f64], nonmember_losses: &[f64]) -> Result<(f64, AttackOutcome)> {
    if member_losses.is_empty() || nonmember_losses.is_empty() {
        return Err(Error::InvalidArgument(
            "optimal threshold needs member and non-member losses".into(),
        ));
    }
    if member_losses.iter().chain(nonmember_losses).any(|l| l.is_nan()) {
        return Err(Error::InvalidArgument("NaN loss".into()));
    }
    let mut pooled: Vec<(f64, bool)> = member_losses
        .iter()
        .map(|&l| (l, true))
        .chain(nonmember_losses.iter().map(|&l| (l, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (pos, neg) = (member_losses.len() as i64, nonmember_losses.len() as i64);

    // advantage numerator over pos*neg, so comparisons stay exact
    let mut best_tau = f64::NEG_INFINITY;
    let mut best_num: i64 = 0;
    let (mut tp, mut fp) = (0i64, 0i64);
    let mut i = 0;
    while i < pooled.len() {
        let v = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == v {
            if pooled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let num = tp * neg - fp * pos;
        if num > best_num {
            best_num = num;
            best_tau = match pooled.get(i) {
                Some(&(next, _)) => {
                    let mid = v + (next - v) / 2.0;
                    if mid > v {
                        mid
                    } else {
                        next
                    }
                }
                None => f64::INFINITY,
            };
        }
    }

    let decisions = member_losses
        .iter()
        .chain(nonmember_losses)
        .map(|&l| threshold_decision(l, best_tau))
        .collect();
    let truth = std::iter::repeat(Membership::Member)
        .take(member_losses.len())
        .chain(std::iter::repeat(Membership::NonMember).take(nonmember_losses.len()))
        .collect();
    Ok((best_tau, AttackOutcome::new(decisions, truth)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub count: usize,
    /// Per-shadow training-set size; defaults to the target's member count.
    pub train_size: Option<usize>,
    pub min_train_size: usize,
    pub attack_hidden: usize,
    /// Train shadows under the target's privacy budget.
    pub private: bool,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            count: 5,
            train_size: None,
            min_train_size: 20,
            attack_hidden: 64,
            private: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowEnsemble {
    pub shadow_models: Vec<MlpModel>,
    /// One attack model per class; `None` when that class had no usable records.
    pub attack_models: Vec<Option<MlpModel>>,
    /// Attack model trained on all classes pooled.
    pub fallback: MlpModel,
    pub shadow_train_size: usize,
}

struct AttackRecord {
    probs: Vec<f64>,
    class: usize,
    member: bool,
}

fn train_attack_model(
    records: &[&AttackRecord],
    classes: usize,
    hidden: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MlpModel> {
    let samples: Vec<Sample> = records
        .iter()
        .enumerate()
        .map(|(i, r)| Sample {
            id: i,
            features: r.probs.clone(),
            label: usize::from(r.member),
            group: None,
        })
        .collect();
    let init = nn::init_model(&[classes, hidden, 2], seed)?;
    let cfg = TrainConfig {
        seed: derive_seed(seed, &[1]),
        ..*cfg
    };
    nn::train(&init, &samples, &cfg, None)
}

/// Trains `count` shadow models on disjoint in/out halves drawn from the
/// adversary's pool, then one attack model per class on the shadows' outputs.
///
/// Returns [`Error::ShadowSkipped`] when the pool cannot support the minimum
/// shadow training size.
pub fn train_shadow_ensemble(
    pool: &[Sample],
    arch: &[usize],
    cfg: &TrainConfig,
    budget: Option<&PrivacyBudget>,
    shadow: &ShadowConfig,
    target_n: usize,
    seed: u64,
) -> Result<ShadowEnsemble> {
    if shadow.count == 0 {
        return Err(Error::InvalidArgument("shadow count must be >= 1".into()));
    }
    let size = shadow.train_size.unwrap_or(target_n).min(pool.len() / 2);
    if size < shadow.min_train_size.max(1) {
        return Err(Error::ShadowSkipped {
            needed: 2 * shadow.min_train_size.max(1),
            available: pool.len(),
        });
    }
    let classes = *arch.last().expect("architecture has an output layer");
    let mut shadow_models = Vec::with_capacity(shadow.count);
    let mut records = Vec::new();
    for k in 0..shadow.count {
        let s_seed = derive_seed(seed, &[k as u64]);
        let mut rng = rng_from(s_seed);
        let idx = index::sample(&mut rng, pool.len(), 2 * size).into_vec();
        let (inside, outside) = idx.split_at(size);
        let train_set: Vec<Sample> = inside.iter().map(|&i| pool[i].clone()).collect();
        let init = nn::init_model(arch, derive_seed(s_seed, &[0]))?;
        let scfg = TrainConfig {
            seed: derive_seed(s_seed, &[1]),
            ..*cfg
        };
        let privacy = match (budget, shadow.private) {
            (Some(b), true) => b.params_for(&scfg, size)?,
            _ => None,
        };
        let model = nn::train(&init, &train_set, &scfg, privacy.as_ref())?;
        for (&i, member) in inside
            .iter()
            .map(|i| (i, true))
            .chain(outside.iter().map(|i| (i, false)))
        {
            records.push(AttackRecord {
                probs: model.forward(&pool[i].features)?,
                class: pool[i].label,
                member,
            });
        }
        shadow_models.push(model);
    }

    let attack_seed = derive_seed(seed, &[u64::MAX]);
    let mut attack_models = Vec::with_capacity(classes);
    for c in 0..classes {
        let rs: Vec<&AttackRecord> = records.iter().filter(|r| r.class == c).collect();
        let both = rs.iter().any(|r| r.member) && rs.iter().any(|r| !r.member);
        attack_models.push(if both {
            Some(train_attack_model(
                &rs,
                classes,
                shadow.attack_hidden,
                cfg,
                derive_seed(attack_seed, &[c as u64]),
            )?)
        } else {
            None
        });
    }
    let all: Vec<&AttackRecord> = records.iter().collect();
    let fallback = train_attack_model(
        &all,
        classes,
        shadow.attack_hidden,
        cfg,
        derive_seed(attack_seed, &[classes as u64]),
    )?;
    Ok(ShadowEnsemble {
        shadow_models,
        attack_models,
        fallback,
        shadow_train_size: size,
    })
}

impl ShadowEnsemble {
    /// Member probability assigned by the attack model routed by `class`.
    pub fn member_score(&self, probs: &[f64], class: usize) -> Result<f64> {
        let attack = self
            .attack_models
            .get(class)
            .and_then(Option::as_ref)
            .unwrap_or(&self.fallback);
        Ok(attack.forward(probs)?[1])
    }
}

/// Member claim iff the class's attack model scores the target's output above 0.5.
pub fn shadow_attack(
    ensemble: &ShadowEnsemble,
    target: &MlpModel,
    samples: &[Sample],
    truth: &[Membership],
) -> Result<AttackOutcome> {
    let decisions = samples
        .iter()
        .map(|s| {
            let probs = target.forward(&s.features)?;
            let score = ensemble.member_score(&probs, s.label)?;
            Ok(if score > 0.5 {
                Membership::Member
            } else {
                Membership::NonMember
            })
        })
        .collect::<Result<Vec<_>>>()?;
    AttackOutcome::new(decisions, truth.to_vec())
}
