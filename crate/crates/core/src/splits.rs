//! Mixture-component pools and member/non-member draws.
//!
//! A [`MixturePools`] holds K disjoint sample pools, one per mixture component.
//! Members are drawn from pool `k_member`, non-members uniformly from the
//! union of all other pools, always without replacement.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

const KMEANS_MAX_ITER: usize = 300;
const KMEANS_RESTARTS: u64 = 10;
/// Two-way problems up to this size are solved by enumeration.
const EXACT_TWO_MEANS_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MixturePools {
    pub pools: Vec<Vec<Sample>>,
    pub k_member: usize,
    pub tags: Vec<String>,
    /// Samples set aside for the adversary, outside every pool.
    pub reserve: Vec<Sample>,
    /// Held-out samples with the same composition as the member pool.
    pub validation: Option<Vec<Sample>>,
    /// Split-attribute values of each pool's samples, recorded before the
    /// attribute was stripped from them.
    pub attribute_record: Option<Vec<Vec<String>>>,
}

impl MixturePools {
    pub fn new(pools: Vec<Vec<Sample>>, k_member: usize, tags: Vec<String>) -> Result<Self> {
        let p = MixturePools {
            pools,
            k_member,
            tags,
            reserve: Vec::new(),
            validation: None,
            attribute_record: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pools.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 pools, got {}",
                self.pools.len()
            )));
        }
        if self.k_member >= self.pools.len() {
            return Err(Error::InvalidArgument(format!(
                "k_member {} out of range for {} pools",
                self.k_member,
                self.pools.len()
            )));
        }
        let mut ids = std::collections::HashSet::new();
        for s in self.pools.iter().flatten() {
            if !ids.insert(s.id) {
                return Err(Error::InvalidArgument(format!(
                    "sample {} appears in more than one pool",
                    s.id
                )));
            }
        }
        Ok(())
    }

    pub fn with_member(mut self, k: usize) -> Result<Self> {
        self.k_member = k;
        self.validate()?;
        Ok(self)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pools.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDraw {
    pub members: Vec<Sample>,
    pub nonmembers: Vec<Sample>,
    pub shadow_pool: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sse: f64,
    /// Within-cluster SSE after each Lloyd iteration of the winning restart.
    pub sse_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[Vec<f64>], limit: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::new();
    for p in points {
        if !seen.iter().any(|q| *q == p.as_slice()) {
            seen.push(p);
            if seen.len() >= limit {
                break;
            }
        }
    }
    seen.len()
}

/// Lloyd's algorithm with k-means++ seeding; the best of several seeded
/// restarts is returned.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("kmeans on empty input".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("kmeans needs k >= 1".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument("kmeans points differ in dimension".into()));
    }
    let distinct = distinct_count(points, k);
    if distinct < k {
        return Err(Error::InsufficientData {
            what: "kmeans distinct points".into(),
            needed: k,
            available: distinct,
        });
    }
    if k == 2 && points.len() <= EXACT_TWO_MEANS_MAX {
        return Ok(exact_two_means(points));
    }
    let mut best: Option<KMeans> = None;
    for restart in 0..KMEANS_RESTARTS {
        let run = lloyd(points, k, derive_seed(seed, &[restart]));
        if best.as_ref().map_or(true, |b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn exact_two_means(points: &[Vec<f64>]) -> KMeans {
    let n = points.len();
    let dim = points[0].len();
    let centroid = |assignment: &[usize], j: usize| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(assignment)
            .filter_map(|(p, &a)| (a == j).then_some(p))
            .collect();
        (0..dim)
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
            .collect()
    };
    let mut best: Option<KMeans> = None;
    // point 0 stays in cluster 0 so each partition is visited once
    for mask in 0u32..(1 << (n - 1)) - 1 {
        let assignment: Vec<usize> = (0..n)
            .map(|i| if i > 0 && mask & (1 << (i - 1)) == 0 { 1 } else { 0 })
            .collect();
        let centroids = vec![centroid(&assignment, 0), centroid(&assignment, 1)];
        let total = sse(points, &centroids, &assignment);
        if best.as_ref().map_or(true, |b| total < b.sse) {
            best = Some(KMeans {
                assignment,
                centroids,
                sse: total,
                sse_trace: vec![total],
            });
        }
    }
    best.expect("at least two points")
}

fn kmeans_pp<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn sse(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    let mut rng = rng_from(seed);
    let dim = points[0].len();
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut trace = Vec::new();

    for _ in 0..KMEANS_MAX_ITER {
        // update step, with empty clusters reseeded at the worst-fit point
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignment[a]]);
                        let db = sq_dist(&points[b], &centroids[assignment[b]]);
                        da.total_cmp(&db)
                    })
                    .expect("non-empty points");
                counts[assignment[far]] -= 1;
                assignment[far] = j;
                counts[j] = 1;
                centroids[j] = points[far].clone();
            }
        }
        trace.push(sse(points, &centroids, &assignment));

        let next: Vec<usize> = points
            .iter()
            .zip(&assignment)
            .map(|(p, &cur)| {
                // keep the current cluster on exact ties so the loop terminates
                let j = nearest(p, &centroids);
                if sq_dist(p, &centroids[j]) < sq_dist(p, &centroids[cur]) {
                    j
                } else {
                    cur
                }
            })
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let final_sse = sse(points, &centroids, &assignment);
    KMeans {
        assignment,
        centroids,
        sse: final_sse,
        sse_trace: trace,
    }
}

/// Per class, k-means with k=2; pool `i` collects cluster `i` of every class.
/// Clusters are ordered by lexicographic centroid comparison.
pub fn cluster_split(data: &Dataset, seed: u64) -> Result<MixturePools> {
    let classes = data.label_classes();
    let mut pools = vec![Vec::new(), Vec::new()];
    for class in 0..classes {
        let members: Vec<&Sample> = data.samples.iter().filter(|s| s.label == class).collect();
        if members.is_empty() {
            continue;
        }
        let points: Vec<Vec<f64>> = members.iter().map(|s| s.features.clone()).collect();
        if distinct_count(&points, 2) < 2 {
            return Err(Error::InsufficientData {
                what: format!("distinct points in class {class}"),
                needed: 2,
                available: distinct_count(&points, 2),
            });
        }
        let km = kmeans(&points, 2, derive_seed(seed, &[class as u64]))?;
        let swap = km.centroids[0]
            .iter()
            .zip(&km.centroids[1])
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            == Some(std::cmp::Ordering::Greater);
        for (s, &a) in members.into_iter().zip(&km.assignment) {
            let pool = if swap { 1 - a } else { a };
            pools[pool].push(s.clone());
        }
    }
    for pool in &mut pools {
        pool.sort_by_key(|s| s.id);
    }
    MixturePools::new(pools, 0, vec!["cluster-1".into(), "cluster-2".into()])
}

fn ceil_frac(p: f64, n: usize) -> usize {
    // guard against 0.3 * 10 = 3.0000000000000004
    ((p * n as f64) - 1e-9).ceil().max(0.0) as usize
}

fn strip_group(mut s: Sample) -> Sample {
    s.group = None;
    s
}

/// Biased member pool vs. balanced non-member pool over a binary view of the
/// split attribute (`value` vs. everything else).
pub fn attribute_bias_pools(
    data: &Dataset,
    value: &str,
    p: f64,
    n: usize,
    seed: u64,
) -> Result<MixturePools> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("bias p={p} outside [0,1]")));
    }
    if data.schema.split_attribute().is_none() {
        return Err(Error::Schema("dataset has no split attribute".into()));
    }
    let mut rng = rng_from(seed);
    let (mut with, mut without): (Vec<Sample>, Vec<Sample>) = data
        .samples
        .iter()
        .cloned()
        .partition(|s| s.group.as_deref() == Some(value));
    with.shuffle(&mut rng);
    without.shuffle(&mut rng);

    let member_with = ceil_frac(p, n);
    let member_without = n - member_with;
    let non_with = n / 2;
    let non_without = n - non_with;
    let val_n = (n + 3) / 4;
    let val_with = ceil_frac(p, val_n);
    let val_without = val_n - val_with;

    let need_with = member_with + non_with;
    let need_without = member_without + non_without;
    if with.len() < need_with {
        return Err(Error::InsufficientData {
            what: format!("samples with attribute value `{value}`"),
            needed: need_with,
            available: with.len(),
        });
    }
    if without.len() < need_without {
        return Err(Error::InsufficientData {
            what: format!("samples without attribute value `{value}`"),
            needed: need_without,
            available: without.len(),
        });
    }

    let take = |v: &mut Vec<Sample>, k: usize| -> Vec<Sample> { v.drain(..k).collect() };
    let mut d1 = take(&mut with, member_with);
    d1.extend(take(&mut without, member_without));
    let mut d2 = take(&mut with, non_with);
    d2.extend(take(&mut without, non_without));

    let validation = (with.len() >= val_with && without.len() >= val_without).then(|| {
        let mut v = take(&mut with, val_with);
        v.extend(take(&mut without, val_without));
        v.into_iter().map(strip_group).collect::<Vec<_>>()
    });

    let record = |pool: &[Sample]| -> Vec<String> {
        pool.iter().map(|s| s.group.clone().unwrap_or_default()).collect()
    };
    let attribute_record = Some(vec![record(&d1), record(&d2)]);

    let mut reserve: Vec<Sample> = with.into_iter().take(n).collect();
    reserve.extend(without.into_iter().take(n));

    let mut pools = MixturePools::new(
        vec![
            d1.into_iter().map(strip_group).collect(),
            d2.into_iter().map(strip_group).collect(),
        ],
        0,
        vec![format!("biased p={p}"), "balanced".into()],
    )?;
    pools.reserve = reserve.into_iter().map(strip_group).collect();
    pools.validation = validation;
    pools.attribute_record = attribute_record;
    Ok(pools)
}

/// Samples whose split attribute equals `member_value` against everything else.
pub fn source_split(data: &Dataset, member_value: &str) -> Result<MixturePools> {
    if data.schema.split_attribute().is_none() {
        return Err(Error::Schema("dataset has no split attribute".into()));
    }
    let (d1, d2): (Vec<Sample>, Vec<Sample>) = data
        .samples
        .iter()
        .cloned()
        .partition(|s| s.group.as_deref() == Some(member_value));
    if d1.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split value `{member_value}` does not occur in the dataset"
        )));
    }
    if d2.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "every sample has split value `{member_value}`; non-member pool is empty"
        )));
    }
    MixturePools::new(
        vec![
            d1.into_iter().map(strip_group).collect(),
            d2.into_iter().map(strip_group).collect(),
        ],
        0,
        vec![member_value.to_string(), format!("not {member_value}")],
    )
}

/// Uniform random partition into `k` near-equal pools; an IID instantiation.
pub fn random_pools(data: &Dataset, k: usize, seed: u64) -> Result<MixturePools> {
    if k < 2 || data.len() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples into {k} pools",
            data.len()
        )));
    }
    let mut samples: Vec<Sample> = data.samples.iter().cloned().map(strip_group).collect();
    samples.shuffle(&mut rng_from(seed));
    let mut pools = vec![Vec::new(); k];
    for (i, s) in samples.into_iter().enumerate() {
        pools[i % k].push(s);
    }
    MixturePools::new(pools, 0, (0..k).map(|i| format!("random-{i}")).collect())
}

/// Members from pool `k_member`, non-members uniformly from the other pools.
/// Leftovers (at most `shadow_cap` per pool, default `n_members`) and the
/// pools' reserve become the adversary's shadow pool.
pub fn draw(
    pools: &MixturePools,
    n_members: usize,
    n_nonmembers: usize,
    shadow_cap: Option<usize>,
    seed: u64,
) -> Result<SplitDraw> {
    pools.validate()?;
    let mut rng = rng_from(seed);
    let member_pool = &pools.pools[pools.k_member];
    if member_pool.len() < n_members {
        return Err(Error::InsufficientData {
            what: "member pool".into(),
            needed: n_members,
            available: member_pool.len(),
        });
    }
    let others: Vec<(usize, usize)> = pools
        .pools
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != pools.k_member)
        .flat_map(|(k, p)| (0..p.len()).map(move |i| (k, i)))
        .collect();
    if others.len() < n_nonmembers {
        return Err(Error::InsufficientData {
            what: "non-member pools".into(),
            needed: n_nonmembers,
            available: others.len(),
        });
    }

    let mut used: Vec<Vec<bool>> = pools.pools.iter().map(|p| vec![false; p.len()]).collect();
    let member_idx = index::sample(&mut rng, member_pool.len(), n_members);
    let members: Vec<Sample> = member_idx
        .iter()
        .map(|i| {
            used[pools.k_member][i] = true;
            member_pool[i].clone()
        })
        .collect();
    let non_idx = index::sample(&mut rng, others.len(), n_nonmembers);
    let nonmembers: Vec<Sample> = non_idx
        .iter()
        .map(|j| {
            let (k, i) = others[j];
            used[k][i] = true;
            pools.pools[k][i].clone()
        })
        .collect();

    let cap = shadow_cap.unwrap_or(n_members);
    let mut shadow_pool = pools.reserve.clone();
    for (k, pool) in pools.pools.iter().enumerate() {
        let mut left: Vec<&Sample> = pool
            .iter()
            .zip(&used[k])
            .filter_map(|(s, u)| (!u).then_some(s))
            .collect();
        left.shuffle(&mut rng);
        shadow_pool.extend(left.into_iter().take(cap).cloned());
    }
    Ok(SplitDraw {
        members,
        nonmembers,
        shadow_pool,
    })
}

/// Pools members and non-members and re-partitions them uniformly, keeping
/// both set sizes.
pub fn iid_counterfactual(d: &SplitDraw, seed: u64) -> SplitDraw {
    let mut all: Vec<Sample> = d.members.iter().chain(&d.nonmembers).cloned().collect();
    all.shuffle(&mut rng_from(seed));
    let nonmembers = all.split_off(d.members.len());
    SplitDraw {
        members: all,
        nonmembers,
        shadow_pool: d.shadow_pool.clone(),
    }
}

/// Config-level description of how pools are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    Cluster {},
    AttributeBias {
        attribute: Option<String>,
        value: String,
        p: f64,
    },
    Source {
        attribute: Option<String>,
        member_value: String,
    },
    /// Use a synthetic generator's components directly as pools.
    Components {},
    Random {
        #[serde(default = "default_random_pools")]
        pools: usize,
    },
}

fn default_random_pools() -> usize {
    2
}
