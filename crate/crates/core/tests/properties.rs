use proptest::prelude::*;
use rand::Rng;

use mialab::attacks::{average_threshold_losses, optimal_threshold, AttackKind, Membership, ShadowConfig};
use mialab::config::ExperimentConfig;
use mialab::dataio::{
    preprocess, synthetic_dataset, Column, ColumnKind, ColumnRole, GaussianComponent, LabelRule, RawTable,
    Sample, Schema,
};
use mialab::dp::{account, calibrate_sigma, clip, compose_and_convert, rdp_sgm, RdpProfile};
use mialab::experiments::{
    batch_mm_campaign, bound_erlingsson, bound_new, bound_yeom, tradeoff_feasible, CampaignSpec, Scenario,
};
use mialab::nn::{init_model, softmax, train_with_report, MlpModel, TrainConfig};
use mialab::rng::rng_from;
use mialab::splits::{attribute_bias_pools, draw, iid_counterfactual, kmeans, MixturePools, SplitDraw};

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sample(id: usize, x: f64, y: f64, label: usize) -> Sample {
    Sample {
        id,
        features: vec![x, y],
        label,
        group: None,
    }
}

fn brute_force_advantage(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut cuts = vec![f64::NEG_INFINITY, f64::INFINITY];
    for &l in members.iter().chain(nonmembers) {
        cuts.push(l);
        cuts.push(l.next_up());
    }
    let rate = |v: &[f64], t: f64| v.iter().filter(|&&l| l < t).count() as f64 / v.len() as f64;
    cuts.iter()
        .map(|&t| rate(members, t) - rate(nonmembers, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn losses() -> impl Strategy<Value = Vec<f64>> {
    // coarse grid so ties show up
    prop::collection::vec((0u32..40).prop_map(|k| k as f64 * 0.25), 1..50)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-500.0f64..500.0, 1..20)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clip_bounds_the_norm(g in prop::collection::vec(-1e3f64..1e3, 1..64), c in 1e-3f64..100.0) {
        let out = clip(&g, c);
        prop_assert!(l2(&out) <= c);
        prop_assert!(l2(&out) <= l2(&g));
        if l2(&g) <= c {
            prop_assert_eq!(out, g);
        }
    }

    #[test]
    fn rdp_monotone(q in 1e-4f64..0.5, sigma in 0.5f64..10.0, a in 0usize..8, dq in 1.01f64..2.0, ds in 1.01f64..2.0) {
        let orders = [1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 8.0, 32.0];
        let alpha = orders[a];
        let base = rdp_sgm(q, sigma, alpha).unwrap();
        let more_q = rdp_sgm((q * dq).min(1.0), sigma, alpha).unwrap();
        let more_sigma = rdp_sgm(q, sigma * ds, alpha).unwrap();
        let tol = 1e-12 * base.max(1e-300);
        prop_assert!(more_q >= base - tol);
        prop_assert!(more_sigma <= base + tol);
        if a + 1 < orders.len() {
            let next = rdp_sgm(q, sigma, orders[a + 1]).unwrap();
            prop_assert!(next >= base - tol);
        }
    }

    #[test]
    fn conversion_monotone(
        values in prop::collection::vec(0.0f64..1.0, 6),
        bump in prop::collection::vec(0.0f64..0.5, 6),
        steps in 1usize..1000,
        extra in 1usize..1000,
        delta in 1e-9f64..0.1,
        shrink in 1.1f64..100.0,
    ) {
        let orders = vec![1.5, 2.0, 4.0, 8.0, 16.0, 64.0];
        let p = RdpProfile::new(orders.clone(), values.clone()).unwrap();
        let bigger = RdpProfile::new(orders, values.iter().zip(&bump).map(|(v, b)| v + b).collect()).unwrap();
        let e = compose_and_convert(&p, steps, delta).unwrap().epsilon;
        prop_assert!(compose_and_convert(&p, steps + extra, delta).unwrap().epsilon >= e);
        prop_assert!(compose_and_convert(&bigger, steps, delta).unwrap().epsilon >= e);
        prop_assert!(compose_and_convert(&p, steps, delta / shrink).unwrap().epsilon >= e);
    }

    #[test]
    fn bounds_ordered_and_monotone(eps in 0.0f64..50.0, d in 0.0f64..5.0, delta in 0.0f64..0.5) {
        let (y, e, n) = (bound_yeom(eps), bound_erlingsson(eps, delta), bound_new(eps, delta));
        prop_assert!(n <= e + 1e-15);
        prop_assert!(n <= y + 1e-15 || delta > 0.0);
        for b in [y, e, n] {
            prop_assert!((0.0..=1.0 + 1e-15).contains(&b));
        }
        prop_assert!(bound_yeom(eps + d) >= y);
        prop_assert!(bound_erlingsson(eps + d, delta) >= e - 1e-15);
        prop_assert!(bound_new(eps + d, delta) >= n - 1e-15);
        let more = (delta + d / 10.0).min(1.0);
        prop_assert!(bound_erlingsson(eps, more) >= e - 1e-15);
        prop_assert!(bound_new(eps, more) >= n - 1e-15);
    }

    #[test]
    fn feasible_points_respect_new_bound(eps in 0.0f64..5.0, delta in 0.0f64..0.2, tpr in 0.0f64..=1.0, fpr in 0.0f64..=1.0) {
        if tradeoff_feasible(tpr, fpr, eps, delta) {
            prop_assert!(tpr - fpr <= bound_new(eps, delta) + 1e-12);
        }
    }

    #[test]
    fn optimal_threshold_matches_brute_force(m in losses(), nm in losses()) {
        let (_, out) = optimal_threshold(&m, &nm).unwrap();
        let brute = brute_force_advantage(&m, &nm);
        prop_assert!((out.advantage - brute).abs() < 1e-12);

        let truth: Vec<Membership> = std::iter::repeat(Membership::Member).take(m.len())
            .chain(std::iter::repeat(Membership::NonMember).take(nm.len())).collect();
        let pooled: Vec<f64> = m.iter().chain(&nm).copied().collect();
        let avg = average_threshold_losses(&m, &pooled, &truth).unwrap();
        prop_assert!(out.advantage >= avg.advantage - 1e-12);
    }

    #[test]
    fn optimal_threshold_invariant_under_monotone_maps(m in losses(), nm in losses()) {
        let f = |v: &[f64]| v.iter().map(|x| (x * 0.7).exp() + 3.0).collect::<Vec<_>>();
        let (_, a) = optimal_threshold(&m, &nm).unwrap();
        let (_, b) = optimal_threshold(&f(&m), &f(&nm)).unwrap();
        prop_assert_eq!(a.decisions, b.decisions);
    }

    #[test]
    fn draw_is_disjoint(sizes in prop::collection::vec(5usize..40, 2..5), n in 1usize..5, m in 1usize..5, seed: u64) {
        let mut id = 0;
        let pools: Vec<Vec<Sample>> = sizes.iter().map(|&s| (0..s).map(|_| { id += 1; sample(id, 0.0, 0.0, 0) }).collect()).collect();
        let pools = MixturePools::new(pools, 0, sizes.iter().map(|s| s.to_string()).collect()).unwrap();
        let d = draw(&pools, n, m, None, seed).unwrap();
        let member_ids: std::collections::HashSet<usize> = pools.pools[0].iter().map(|s| s.id).collect();
        let mut seen = std::collections::HashSet::new();
        for s in d.members.iter().chain(&d.nonmembers).chain(&d.shadow_pool) {
            prop_assert!(seen.insert(s.id), "sample {} drawn twice", s.id);
        }
        prop_assert_eq!(d.members.len(), n);
        prop_assert_eq!(d.nonmembers.len(), m);
        prop_assert!(d.members.iter().all(|s| member_ids.contains(&s.id)));
        prop_assert!(d.nonmembers.iter().all(|s| !member_ids.contains(&s.id)));
    }

    #[test]
    fn counterfactual_conserves_samples(n in 1usize..30, m in 1usize..30, seed: u64) {
        let d = SplitDraw {
            members: (0..n).map(|i| sample(i, 0.0, 0.0, 0)).collect(),
            nonmembers: (n..n + m).map(|i| sample(i, 1.0, 1.0, 1)).collect(),
            shadow_pool: vec![sample(999, 2.0, 2.0, 0)],
        };
        let c = iid_counterfactual(&d, seed);
        prop_assert_eq!(c.members.len(), n);
        prop_assert_eq!(c.nonmembers.len(), m);
        let mut ids: Vec<usize> = c.members.iter().chain(&c.nonmembers).map(|s| s.id).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n + m).collect::<Vec<_>>());
        prop_assert_eq!(c.shadow_pool, d.shadow_pool);
    }

    #[test]
    fn kmeans_trace_never_increases(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40), k in 1usize..4, seed: u64) {
        let pts: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        let km = kmeans(&pts, k, seed).unwrap();
        for w in km.sse_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert_eq!(km.assignment.len(), pts.len());
    }

    #[test]
    fn kmeans_matches_exhaustive_optimum(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..=12), seed: u64) {
        let pts: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        prop_assume!(pts.iter().any(|p| *p != pts[0]));
        let km = kmeans(&pts, 2, seed).unwrap();
        let best = exhaustive_two_means(&pts);
        prop_assert!((km.sse - best).abs() <= 1e-9 * best.max(1.0), "kmeans {} vs optimum {}", km.sse, best);
    }

    #[test]
    fn attribute_bias_member_count(pct in 0u32..=100, n in 4usize..60, seed: u64) {
        let data = two_component_dataset(2 * n + 10, seed);
        let p = pct as f64 / 100.0;
        let pools = attribute_bias_pools(&data, "0", p, n, seed).unwrap();
        let record = pools.attribute_record.as_ref().unwrap();
        let with = record[0].iter().filter(|g| *g == "0").count();
        prop_assert_eq!(with, (pct as usize * n).div_ceil(100));
        prop_assert_eq!(pools.pools[0].len(), n);
        prop_assert_eq!(record[1].iter().filter(|g| *g == "0").count(), n / 2);
    }

    #[test]
    fn preprocess_scales_and_is_idempotent(rows in prop::collection::vec((-1e3f64..1e3, 0usize..3, 0usize..2), 2..40), seed: u64) {
        let cats = ["a", "b", "c"];
        let mut rows = rows;
        rows[0].1 = 0;
        rows[1].1 = 1;
        let raw = RawTable {
            headers: vec!["x".into(), "c".into(), "y".into()],
            rows: rows.iter().map(|(x, c, y)| vec![Some(x.to_string()), Some(cats[*c].to_string()), Some(y.to_string())]).collect(),
        };
        let schema = Schema::new(vec![
            Column { name: "x".into(), kind: ColumnKind::Numeric, role: ColumnRole::Feature },
            Column { name: "c".into(), kind: ColumnKind::Categorical, role: ColumnRole::Feature },
            Column { name: "y".into(), kind: ColumnKind::Categorical, role: ColumnRole::Label },
        ], 2).unwrap();
        let ds = preprocess(&raw, &schema, seed).unwrap();
        prop_assert!(ds.samples.iter().all(|s| s.features.len() == ds.width()));
        let xs: Vec<f64> = ds.samples.iter().map(|s| s.features[0]).collect();
        let raw_xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let constant = raw_xs.iter().all(|&x| x == raw_xs[0]);
        if constant {
            prop_assert!(xs.iter().all(|&x| x == 0.0));
        } else {
            prop_assert_eq!(xs.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            prop_assert_eq!(xs.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
        }
        for s in &ds.samples {
            prop_assert!(s.features.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let keys: std::collections::HashSet<(Vec<u64>, usize)> = ds.samples.iter()
            .map(|s| (s.features.iter().map(|v| v.to_bits()).collect(), s.label)).collect();
        prop_assert_eq!(keys.len(), ds.samples.len());
        let distinct_in: std::collections::HashSet<(u64, usize, usize)> = rows.iter().map(|(x, c, y)| (x.to_bits(), *c, *y)).collect();
        prop_assert!(ds.samples.len() <= distinct_in.len());

        let again = preprocess(&ds.to_raw_table(), &ds.encoded_schema(), seed).unwrap();
        let strip = |v: &[Sample]| v.iter().map(|s| (s.features.clone(), s.label)).collect::<Vec<_>>();
        prop_assert_eq!(strip(&again.samples), strip(&ds.samples));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn calibration_round_trip(eps in 0.05f64..20.0, q in 0.001f64..0.2, steps in 10usize..3000) {
        let sigma = calibrate_sigma(eps, 1e-5, q, steps).unwrap();
        let got = account(q, sigma, steps, 1e-5).unwrap().epsilon;
        prop_assert!(got <= eps && got >= 0.97 * eps, "target {eps}, sigma {sigma}, got {got}");
    }

    #[test]
    fn gradients_match_finite_differences(widths in prop::collection::vec(1usize..6, 1..3), input in 1usize..5, seed: u64) {
        let mut dims = vec![input];
        dims.extend(&widths);
        dims.push(3);
        let mut model = init_model(&dims, seed).unwrap();
        let mut rng = rng_from(seed);
        let s = Sample {
            id: 0,
            features: (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            label: rng.gen_range(0..3),
            group: None,
        };
        prop_assume!(kink_margin(&model, &s.features) > 1e-3);
        let grad = model.per_example_grad(&s, 0.0).unwrap();
        let base = model.params();
        let h = 1e-5;
        for p in 0..base.len() {
            let mut shifted = base.clone();
            shifted[p] = base[p] + h;
            model.set_params(&shifted).unwrap();
            let up = model.logloss(&s).unwrap();
            shifted[p] = base[p] - h;
            model.set_params(&shifted).unwrap();
            let down = model.logloss(&s).unwrap();
            let fd = (up - down) / (2.0 * h);
            if grad[p].abs() < 1e-6 && fd.abs() < 1e-6 {
                continue;
            }
            let rel = (grad[p] - fd).abs() / grad[p].abs().max(fd.abs());
            prop_assert!(rel < 1e-4, "param {p}: analytic {} vs numeric {fd}", grad[p]);
        }
    }
}

/// Smallest |pre-activation| over the hidden units.
fn kink_margin(model: &MlpModel, x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut margin = f64::INFINITY;
    let layers = model.layers();
    for l in &layers[..layers.len() - 1] {
        let z: Vec<f64> = (0..l.outputs)
            .map(|o| (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * a[i]).sum::<f64>() + l.bias[o])
            .collect();
        margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        a = z.iter().map(|v| v.max(0.0)).collect();
    }
    margin
}

fn exhaustive_two_means(pts: &[Vec<f64>]) -> f64 {
    let n = pts.len();
    let cost = |idx: &[usize]| -> f64 {
        if idx.is_empty() {
            return 0.0;
        }
        let c: Vec<f64> = (0..2)
            .map(|d| idx.iter().map(|&i| pts[i][d]).sum::<f64>() / idx.len() as f64)
            .collect();
        idx.iter()
            .map(|&i| (0..2).map(|d| (pts[i][d] - c[d]).powi(2)).sum::<f64>())
            .sum()
    };
    (1u32..(1 << n) - 1)
        .map(|mask| {
            let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| mask & (1 << i) != 0);
            cost(&a) + cost(&b)
        })
        .fold(f64::INFINITY, f64::min)
}

fn two_component_dataset(npc: usize, seed: u64) -> mialab::dataio::Dataset {
    let comps = [
        GaussianComponent {
            mean: vec![-1.0, 0.0],
            std: vec![1.0, 1.0],
            label: LabelRule::Constant(0),
        },
        GaussianComponent {
            mean: vec![1.0, 0.0],
            std: vec![1.0, 1.0],
            label: LabelRule::Constant(1),
        },
    ];
    synthetic_dataset(&comps, npc, seed).unwrap()
}

#[test]
fn kmeans_finds_separated_optimum() {
    let pts: Vec<Vec<f64>> = [(0.0, 0.0), (0.5, 0.2), (0.1, 0.6), (9.0, 9.0), (9.4, 8.8), (8.7, 9.3), (9.1, 9.6)]
        .iter()
        .map(|&(x, y)| vec![x, y])
        .collect();
    let km = kmeans(&pts, 2, 3).unwrap();
    assert!((km.sse - exhaustive_two_means(&pts)).abs() < 1e-12);
}

#[test]
fn counterfactual_member_share_matches_ratio() {
    let (n, m) = (30, 70);
    let d = SplitDraw {
        members: (0..n).map(|i| sample(i, 0.0, 0.0, 0)).collect(),
        nonmembers: (n..n + m).map(|i| sample(i, 0.0, 0.0, 0)).collect(),
        shadow_pool: Vec::new(),
    };
    let share: f64 = (0..1000u64)
        .map(|seed| {
            let c = iid_counterfactual(&d, seed);
            c.members.iter().filter(|s| s.id < n).count() as f64 / n as f64
        })
        .sum::<f64>()
        / 1000.0;
    let expected = n as f64 / (n + m) as f64;
    assert!((share - expected).abs() <= 0.02, "share {share} vs {expected}");
}

#[test]
fn plain_training_smoothed_loss_descends() {
    let data: Vec<Sample> = (0..200)
        .map(|i| {
            let t = (i / 2) as f64 / 100.0;
            if i % 2 == 0 {
                sample(i, -1.0 - t, 0.5 - t, 0)
            } else {
                sample(i, 1.0 + t, t - 0.5, 1)
            }
        })
        .collect();
    for seed in 0..5 {
        let init = init_model(&[2, 2], seed).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 10,
            learning_rate: 0.01,
            seed,
            ..TrainConfig::default()
        };
        let (trained, report) = train_with_report(&init, &data, &cfg, None, false).unwrap();
        let smoothed: Vec<f64> = report
            .step_losses
            .chunks(20)
            .map(|w| w.iter().sum::<f64>() / w.len() as f64)
            .collect();
        for (i, w) in smoothed.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-3, "seed {seed}, window {i}: {} -> {}", w[0], w[1]);
        }
        let mean = |m: &MlpModel| m.loglosses(&data).unwrap().iter().sum::<f64>() / data.len() as f64;
        assert!(mean(&trained) < mean(&init), "seed {seed}");
    }
}

#[test]
fn identical_pools_match_counterfactual() {
    let comp = GaussianComponent {
        mean: vec![0.0, 0.0],
        std: vec![1.0, 1.0],
        label: LabelRule::Halfspace {
            weights: vec![1.0, 1.0],
            bias: 0.0,
        },
    };
    let pools = mialab::dataio::synthetic_mixture(&[comp.clone(), comp], 200, 5).unwrap();
    let spec = CampaignSpec {
        n: 50,
        m: 50,
        epsilon_grid: vec![f64::INFINITY],
        delta: 1e-5,
        repetitions: 12,
        attacks: vec![AttackKind::OptimalThreshold],
        arch: vec![2, 16, 2],
        train: TrainConfig {
            epochs: 30,
            batch_size: 25,
            ..TrainConfig::default()
        },
        clip_norm: 1.0,
        shadow: ShadowConfig::default(),
        shadow_cap: None,
        seed: 17,
        export_traces: false,
    };
    let r = batch_mm_campaign(&spec, &pools, 4).unwrap();
    let get = |sc| r.summary(f64::INFINITY, AttackKind::OptimalThreshold, sc).unwrap();
    let (mm, iid) = (get(Scenario::NonIid), get(Scenario::Iid));
    let slack = mm.ci_half_width.unwrap() + iid.ci_half_width.unwrap();
    assert!(
        (mm.mean_advantage - iid.mean_advantage).abs() <= slack,
        "{} vs {} (slack {slack})",
        mm.mean_advantage,
        iid.mean_advantage
    );
}

#[test]
fn digest_tracks_meaningful_fields() {
    let base = r#"{"data": {"kind": "synthetic", "preset": "two_gaussians", "n_per_component": 50},
        "split": {"kind": "random"}, "n": 10, "seed": 1}"#;
    let reordered = r#"{"seed": 1, "n": 10, "split": {"kind": "random"},
        "data": {"n_per_component": 50, "preset": "two_gaussians", "kind": "synthetic"}}"#;
    let explicit_default = r#"{"data": {"kind": "synthetic", "preset": "two_gaussians", "n_per_component": 50},
        "split": {"kind": "random"}, "n": 10, "seed": 1, "repetitions": 1}"#;
    let changed = r#"{"data": {"kind": "synthetic", "preset": "two_gaussians", "n_per_component": 50},
        "split": {"kind": "random"}, "n": 11, "seed": 1}"#;
    let canon = |t: &str| ExperimentConfig::from_json(t).unwrap().canonical_json();
    assert_eq!(canon(base), canon(reordered));
    assert_eq!(canon(base), canon(explicit_default));
    assert_ne!(canon(base), canon(changed));
}
