//! Single-draw membership games. Each returns `true` when the adversary
//! recovers the challenger's bit.

use rand::seq::index;
use rand::Rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{mean, optimal_threshold, threshold_decision, AttackKind, Membership};
use crate::dataio::Sample;
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel, TrainConfig};
use crate::rng::{derive_seed, rng_from};
use crate::splits::MixturePools;

use super::campaign::CampaignSpec;
use super::stats::ci95_half_width;

/// A (possibly randomized) training algorithm.
pub trait Trainer: Sync {
    fn train(&self, samples: &[Sample], seed: u64) -> Result<MlpModel>;
}

impl<F> Trainer for F
where
    F: Fn(&[Sample], u64) -> Result<MlpModel> + Sync,
{
    fn train(&self, samples: &[Sample], seed: u64) -> Result<MlpModel> {
        self(samples, seed)
    }
}

/// Adam or DP-Adam on a fresh Glorot-initialized MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrainer {
    pub arch: Vec<usize>,
    pub cfg: TrainConfig,
    /// `None` or ε = ∞ trains without privacy.
    pub budget: Option<PrivacyBudget>,
}

impl Trainer for MlpTrainer {
    fn train(&self, samples: &[Sample], seed: u64) -> Result<MlpModel> {
        let init = nn::init_model(&self.arch, derive_seed(seed, &[0]))?;
        let cfg = TrainConfig {
            seed: derive_seed(seed, &[1]),
            ..self.cfg
        };
        let privacy = match &self.budget {
            Some(b) => b.params_for(&cfg, samples.len())?,
            None => None,
        };
        nn::train(&init, samples, &cfg, privacy.as_ref())
    }
}

/// What the adversary sees in the distributional games: the released model,
/// the challenge point, `n`, and losses standing in for knowledge of the
/// member and non-member distributions. Neither loss list contains `z`.
#[derive(Debug, Clone, Copy)]
pub struct GameView<'a> {
    pub model: &'a MlpModel,
    pub z: &'a Sample,
    pub n: usize,
    pub member_losses: &'a [f64],
    pub reference_losses: &'a [f64],
}

pub trait GameAttack: Sync {
    fn guess(&self, view: &GameView<'_>) -> Result<Membership>;
}

impl<F> GameAttack for F
where
    F: Fn(&GameView<'_>) -> Membership + Sync,
{
    fn guess(&self, view: &GameView<'_>) -> Result<Membership> {
        Ok(self(view))
    }
}

/// Member iff `z`'s loss is below the mean member loss.
#[derive(Debug, Clone, Copy, Default)]
pub struct AverageThresholdGuess;

impl GameAttack for AverageThresholdGuess {
    fn guess(&self, view: &GameView<'_>) -> Result<Membership> {
        if view.member_losses.is_empty() {
            return Err(Error::InvalidArgument("no member losses in view".into()));
        }
        let tau = mean(view.member_losses);
        Ok(threshold_decision(view.model.logloss(view.z)?, tau))
    }
}

/// Fits the best threshold separating member from reference losses, then
/// applies it to `z`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OptimalThresholdGuess;

impl GameAttack for OptimalThresholdGuess {
    fn guess(&self, view: &GameView<'_>) -> Result<Membership> {
        let (tau, _) = optimal_threshold(view.member_losses, view.reference_losses)?;
        Ok(threshold_decision(view.model.logloss(view.z)?, tau))
    }
}

/// Adversary view in the strong game: it knows every training point but one.
#[derive(Debug, Clone, Copy)]
pub struct StrongView<'a> {
    pub model: &'a MlpModel,
    pub known: &'a [Sample],
    pub z: &'a Sample,
    pub z_prime: &'a Sample,
}

fn coin<R: Rng>(rng: &mut R) -> Membership {
    Membership::from_bit(rng.gen_range(0..2u8))
}

fn losses_except(model: &MlpModel, samples: &[Sample], skip: usize) -> Result<Vec<f64>> {
    samples
        .iter()
        .filter(|s| s.id != skip)
        .map(|s| model.logloss(s))
        .collect()
}

/// Strong game: train on `known ∪ {z}` (b = 0) or `known ∪ {z′}` (b = 1); the
/// adversary, knowing both candidates, guesses `b`.
pub fn exp_strong<A, T>(
    attack: A,
    trainer: &T,
    known: &[Sample],
    z: &Sample,
    z_prime: &Sample,
    seed: u64,
) -> Result<bool>
where
    A: Fn(&StrongView<'_>) -> Membership,
    T: Trainer + ?Sized,
{
    let mut rng = rng_from(seed);
    let b = coin(&mut rng);
    let mut set = known.to_vec();
    set.push(match b {
        Membership::Member => z.clone(),
        Membership::NonMember => z_prime.clone(),
    });
    let model = trainer.train(&set, derive_seed(seed, &[1]))?;
    let guess = attack(&StrongView {
        model: &model,
        known,
        z,
        z_prime,
    });
    Ok(guess == b)
}

/// IID game: `S` is `n` uniform draws from `pool`; `z` comes from `S` (b = 0)
/// or from the rest of `pool` (b = 1).
pub fn exp_iid<A, T>(attack: &A, trainer: &T, n: usize, pool: &[Sample], seed: u64) -> Result<bool>
where
    A: GameAttack + ?Sized,
    T: Trainer + ?Sized,
{
    check_pool(pool, n)?;
    let mut rng = rng_from(seed);
    let (set, rest) = split_pool(pool, n, &mut rng);
    let model = trainer.train(&set, derive_seed(seed, &[1]))?;
    let b = coin(&mut rng);
    let z = match b {
        Membership::Member => &set[rng.gen_range(0..set.len())],
        Membership::NonMember => &rest[rng.gen_range(0..rest.len())],
    };
    judge(attack, &model, z, n, &set, &rest, b)
}

/// Alternative IID game: both challenge candidates are drawn before the coin.
/// Its success rate must match [`exp_iid`] in distribution.
pub fn exp_alt<A, T>(attack: &A, trainer: &T, n: usize, pool: &[Sample], seed: u64) -> Result<bool>
where
    A: GameAttack + ?Sized,
    T: Trainer + ?Sized,
{
    check_pool(pool, n)?;
    let mut rng = rng_from(seed);
    let (set, rest) = split_pool(pool, n, &mut rng);
    let model = trainer.train(&set, derive_seed(seed, &[1]))?;
    let z_in = &set[rng.gen_range(0..set.len())];
    let z_out = &rest[rng.gen_range(0..rest.len())];
    let b = coin(&mut rng);
    let z = if b == Membership::Member { z_in } else { z_out };
    judge(attack, &model, z, n, &set, &rest, b)
}

/// Mixture game: a pool index `k` is drawn uniformly and `S` comes from pool
/// `k`; a non-member challenge comes from a uniformly chosen other pool.
pub fn exp_mm<A, T>(attack: &A, trainer: &T, n: usize, pools: &[Vec<Sample>], seed: u64) -> Result<bool>
where
    A: GameAttack + ?Sized,
    T: Trainer + ?Sized,
{
    if pools.len() < 2 {
        return Err(Error::InvalidArgument("mixture game needs at least 2 pools".into()));
    }
    if let Some(p) = pools.iter().find(|p| p.len() < n.max(1)) {
        return Err(Error::InsufficientData {
            what: "mixture pool".into(),
            needed: n.max(1),
            available: p.len(),
        });
    }
    let mut rng = rng_from(seed);
    let k = rng.gen_range(0..pools.len());
    let (set, _) = split_pool(&pools[k], n, &mut rng);
    let model = trainer.train(&set, derive_seed(seed, &[1]))?;
    let others: Vec<Sample> = pools
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .flat_map(|(_, p)| p.iter().cloned())
        .collect();
    let b = coin(&mut rng);
    let z = match b {
        Membership::Member => set[rng.gen_range(0..set.len())].clone(),
        Membership::NonMember => {
            let mut j = rng.gen_range(0..pools.len() - 1);
            if j >= k {
                j += 1;
            }
            pools[j][rng.gen_range(0..pools[j].len())].clone()
        }
    };
    judge(attack, &model, &z, n, &set, &others, b)
}

fn check_pool(pool: &[Sample], n: usize) -> Result<()> {
    if n == 0 || pool.len() <= n {
        return Err(Error::InsufficientData {
            what: "game pool".into(),
            needed: n + 1,
            available: pool.len(),
        });
    }
    Ok(())
}

fn split_pool<R: Rng>(pool: &[Sample], n: usize, rng: &mut R) -> (Vec<Sample>, Vec<Sample>) {
    let mut taken = vec![false; pool.len()];
    let set = index::sample(rng, pool.len(), n)
        .iter()
        .map(|i| {
            taken[i] = true;
            pool[i].clone()
        })
        .collect();
    let rest = pool
        .iter()
        .zip(&taken)
        .filter_map(|(s, t)| (!t).then(|| s.clone()))
        .collect();
    (set, rest)
}

fn judge<A: GameAttack + ?Sized>(
    attack: &A,
    model: &MlpModel,
    z: &Sample,
    n: usize,
    members: &[Sample],
    reference: &[Sample],
    b: Membership,
) -> Result<bool> {
    let member_losses = losses_except(model, members, z.id)?;
    let reference_losses = losses_except(model, reference, z.id)?;
    let guess = attack.guess(&GameView {
        model,
        z,
        n,
        member_losses: &member_losses,
        reference_losses: &reference_losses,
    })?;
    Ok(guess == b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Strong,
    Iid,
    Alt,
    Mm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameRecord {
    pub epsilon: f64,
    pub attack: &'static str,
    pub repetition: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSummary {
    pub epsilon: f64,
    pub attack: &'static str,
    pub games: usize,
    pub success_rate: f64,
    /// `2·success_rate − 1`.
    pub advantage: f64,
    pub ci_half_width: Option<f64>,
}

/// Loss comparison used in the strong game: member iff `z` fits better than `z′`.
pub const STRONG_ATTACK_NAME: &str = "loss_comparison";

/// Plays `spec.repetitions` games of `kind` for every ε and threshold attack.
/// The strong game always uses the loss-comparison adversary.
pub fn play_games(kind: GameKind, spec: &CampaignSpec, pools: &MixturePools, jobs: usize) -> Result<Vec<GameRecord>> {
    spec.validate()?;
    if kind != GameKind::Strong && spec.attacks.contains(&AttackKind::Shadow) {
        return Err(Error::InvalidArgument(
            "the shadow attack is only available in the batch campaign".into(),
        ));
    }
    let flat: Vec<Sample> = pools.pools.iter().flatten().cloned().collect();
    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<GameRecord>> = thread_pool.install(|| {
        (0..spec.repetitions)
            .into_par_iter()
            .map(|r| {
                let mut out = Vec::new();
                for (ei, &epsilon) in spec.epsilon_grid.iter().enumerate() {
                    let trainer = MlpTrainer {
                        arch: spec.arch.clone(),
                        cfg: spec.train,
                        budget: Some(PrivacyBudget {
                            epsilon,
                            delta: spec.delta,
                            clip_norm: spec.clip_norm,
                        }),
                    };
                    let base = derive_seed(spec.seed, &[r as u64, ei as u64]);
                    if kind == GameKind::Strong {
                        out.push(GameRecord {
                            epsilon,
                            attack: STRONG_ATTACK_NAME,
                            repetition: r,
                            success: strong_round(&trainer, spec.n, &flat, base)?,
                        });
                        continue;
                    }
                    for (ai, &attack) in spec.attacks.iter().enumerate() {
                        let seed = derive_seed(base, &[ai as u64]);
                        let guess: &dyn GameAttack = match attack {
                            AttackKind::AverageThreshold => &AverageThresholdGuess,
                            _ => &OptimalThresholdGuess,
                        };
                        let success = match kind {
                            GameKind::Iid => exp_iid(guess, &trainer, spec.n, &flat, seed)?,
                            GameKind::Alt => exp_alt(guess, &trainer, spec.n, &flat, seed)?,
                            _ => exp_mm(guess, &trainer, spec.n, &pools.pools, seed)?,
                        };
                        out.push(GameRecord {
                            epsilon,
                            attack: attack.name(),
                            repetition: r,
                            success,
                        });
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_rep.into_iter().flatten().collect())
}

fn strong_round(trainer: &MlpTrainer, n: usize, pool: &[Sample], seed: u64) -> Result<bool> {
    if n == 0 || pool.len() < n + 1 {
        return Err(Error::InsufficientData {
            what: "strong game pool".into(),
            needed: n + 1,
            available: pool.len(),
        });
    }
    let mut rng = rng_from(derive_seed(seed, &[0]));
    let idx = index::sample(&mut rng, pool.len(), n + 1).into_vec();
    let known: Vec<Sample> = idx[..n - 1].iter().map(|&i| pool[i].clone()).collect();
    let (z, z_prime) = (&pool[idx[n - 1]], &pool[idx[n]]);
    let compare = |v: &StrongView<'_>| {
        let lz = v.model.logloss(v.z).unwrap_or(f64::INFINITY);
        let lzp = v.model.logloss(v.z_prime).unwrap_or(f64::INFINITY);
        if lz < lzp {
            Membership::Member
        } else {
            Membership::NonMember
        }
    };
    exp_strong(compare, trainer, &known, z, z_prime, derive_seed(seed, &[1]))
}

/// Success rate and implied advantage per (ε, attack), in first-seen order.
pub fn summarize_games(records: &[GameRecord]) -> Vec<GameSummary> {
    let mut keys: Vec<(f64, &'static str)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(e, a)| e == r.epsilon && a == r.attack) {
            keys.push((r.epsilon, r.attack));
        }
    }
    keys.into_iter()
        .map(|(epsilon, attack)| {
            let wins: Vec<f64> = records
                .iter()
                .filter(|r| r.epsilon == epsilon && r.attack == attack)
                .map(|r| if r.success { 1.0 } else { 0.0 })
                .collect();
            let rate = mean(&wins);
            GameSummary {
                epsilon,
                attack,
                games: wins.len(),
                success_rate: rate,
                advantage: 2.0 * rate - 1.0,
                ci_half_width: ci95_half_width(&wins).map(|h| 2.0 * h),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    fn pool(n: usize, offset: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: offset + i,
                features: vec![i as f64 / n as f64],
                label: i % 2,
                group: None,
            })
            .collect()
    }

    /// Encodes the sum of training ids in the output bias.
    fn id_trainer(samples: &[Sample], _seed: u64) -> Result<MlpModel> {
        let total: usize = samples.iter().map(|s| s.id).sum();
        MlpModel::from_layers(vec![Dense {
            inputs: 1,
            outputs: 2,
            weights: vec![0.0; 2],
            bias: vec![total as f64, 0.0],
        }])
    }

    #[test]
    fn strong_game_oracle_always_wins() {
        let known = pool(5, 0);
        let z = pool(1, 100).remove(0);
        let zp = pool(1, 200).remove(0);
        let known_sum: usize = known.iter().map(|s| s.id).sum();
        let oracle = |v: &StrongView<'_>| {
            if v.model.layers()[0].bias[0] as usize == known_sum + v.z.id {
                Membership::Member
            } else {
                Membership::NonMember
            }
        };
        for seed in 0..50 {
            assert!(exp_strong(oracle, &id_trainer, &known, &z, &zp, seed).unwrap());
        }
    }

    #[test]
    fn constant_guess_wins_half_the_time() {
        let p = pool(40, 0);
        let always = |_: &GameView<'_>| Membership::Member;
        let wins = (0..2000)
            .filter(|&s| exp_iid(&always, &id_trainer, 10, &p, s).unwrap())
            .count();
        assert!((wins as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn view_excludes_challenge() {
        let p = pool(30, 0);
        let check = |v: &GameView<'_>| {
            assert_eq!(v.member_losses.len() + v.reference_losses.len(), 29);
            assert_eq!(v.n, 10);
            Membership::Member
        };
        for s in 0..20 {
            exp_iid(&check, &id_trainer, 10, &p, s).unwrap();
            exp_alt(&check, &id_trainer, 10, &p, s).unwrap();
        }
    }

    #[test]
    fn mixture_game_needs_two_pools() {
        let always = |_: &GameView<'_>| Membership::Member;
        assert!(exp_mm(&always, &id_trainer, 5, &[pool(10, 0)], 0).is_err());
        assert!(exp_mm(&always, &id_trainer, 5, &[pool(10, 0), pool(10, 10)], 0).is_ok());
    }

    #[test]
    fn small_pool_rejected() {
        let always = |_: &GameView<'_>| Membership::Member;
        assert!(exp_iid(&always, &id_trainer, 10, &pool(10, 0), 0).is_err());
    }
}
