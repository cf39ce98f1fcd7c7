mod common;

use climd_core::distribution::{alpha_schedule, balanced_fallback, epoch_target, fit_alpha, powerlaw_pdf, AlphaFit};
use climd_core::measurer::{score_dataset, score_dataset_par};
use climd_core::scheduler::{build_queues, build_schedule};
use climd_core::{
    complementarity, intra_modal_confidence, pairwise_similarity, ClassDistribution, DifficultyOrder, DifficultyRecord,
    DifficultyTable, ModalityOutput, SampleTrace, ScheduleConfig,
};
use proptest::prelude::*;

fn prob_vector(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, c).prop_filter_map("nonzero mass", |raw| {
        let z: f64 = raw.iter().sum();
        (z > 1e-9).then(|| raw.iter().map(|v| v / z).collect())
    })
}

fn embedding(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, d).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn traces(max: usize) -> impl Strategy<Value = Vec<SampleTrace>> {
    (2usize..5, 2usize..4, 1usize..5).prop_flat_map(move |(c, m, d)| {
        prop::collection::vec(
            (0..c, prop::collection::vec((prob_vector(c), embedding(d)), m)),
            0..max,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (label, mods))| SampleTrace {
                    sample_id: format!("t{i}"),
                    label,
                    modalities: mods
                        .into_iter()
                        .map(|(probs, embedding)| ModalityOutput { probs, embedding })
                        .collect(),
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn confidence_in_range_and_monotone(c in 2usize..20, mut ps in prop::collection::vec(0.0f64..=1.0, 2..30)) {
        ps.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for p in ps {
            let mut probs = vec![(1.0 - p) / (c - 1) as f64; c];
            probs[0] = p;
            let psi = intra_modal_confidence(&probs, 0).unwrap();
            prop_assert!(psi > 0.0 && psi <= 0.5);
            prop_assert!(psi >= prev);
            prop_assert_eq!(psi == 0.5, p == 1.0);
            prev = psi;
        }
    }

    #[test]
    fn similarity_symmetric_and_scale_free(a in embedding(4), b in embedding(4), s in 0.01f64..100.0, t in 0.01f64..100.0) {
        let ab = pairwise_similarity(&a, &b).unwrap();
        prop_assert!((ab - pairwise_similarity(&b, &a).unwrap()).abs() <= 1e-12);
        let a2: Vec<f64> = a.iter().map(|x| x * s).collect();
        let b2: Vec<f64> = b.iter().map(|x| x * t).collect();
        prop_assert!((ab - pairwise_similarity(&a2, &b2).unwrap()).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn complementarity_bounds(es in prop::collection::vec(embedding(3), 2..6), s in 0.01f64..100.0) {
        let phi = complementarity(&es).unwrap();
        prop_assert!((0.0..=2.0).contains(&phi));
        let mut scaled = es.clone();
        scaled[0].iter_mut().for_each(|x| *x *= s);
        prop_assert!((phi - complementarity(&scaled).unwrap()).abs() <= 1e-9);
        let same = vec![es[0].clone(); es.len()];
        prop_assert!(complementarity(&same).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn dataset_scoring_decomposes_and_permutes(ts in traces(20), seed in any::<u64>()) {
        let table = score_dataset(&ts).unwrap();
        prop_assert_eq!(&table, &score_dataset_par(&ts).unwrap());
        for rec in &table.records {
            prop_assert!((rec.r - (rec.phi + rec.mean_psi())).abs() <= 1e-9);
        }
        let mut perm: Vec<usize> = (0..ts.len()).collect();
        let mut state = seed;
        for i in (1..perm.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<SampleTrace> = perm.iter().map(|&i| ts[i].clone()).collect();
        let permuted = score_dataset(&shuffled).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(&permuted.records[k], &table.records[i]);
        }
    }

    #[test]
    fn fit_matches_grid_search(counts in prop::collection::vec(1u64..2000, 2..12), gamma in 0.1f64..1.0) {
        match fit_alpha(&counts, gamma, balanced_fallback(gamma)).unwrap() {
            AlphaFit::Fitted { alpha_hat } => {
                prop_assert!(alpha_hat > 1.0 / gamma);
                let grid = common::grid_search_alpha(&counts, gamma, 1e-3);
                prop_assert!((alpha_hat - grid).abs() <= 1e-3, "closed form {} vs grid {}", alpha_hat, grid);
            }
            AlphaFit::DegenerateBalanced { .. } => {
                prop_assert!(counts.iter().all(|&n| n == counts[0]));
            }
        }
    }

    #[test]
    fn ramp_is_affine_and_clamped(t_total in 2usize..60, cap in 1.0f64..20.0) {
        let values: Vec<f64> = (1..=t_total).map(|t| alpha_schedule(t, t_total, cap).unwrap()).collect();
        prop_assert_eq!(values[0], 1.0);
        prop_assert!((values[t_total - 1] - cap).abs() <= 1e-12);
        for w in values.windows(3) {
            prop_assert!(w[0] <= w[1]);
            prop_assert!(((w[2] - w[1]) - (w[1] - w[0])).abs() <= 1e-9);
        }
    }

    #[test]
    fn targets_are_ordered_distributions(counts in prop::collection::vec(1u64..500, 2..15), t_total in 2usize..30) {
        let dist = ClassDistribution::from_counts(counts, 0.3).unwrap();
        let n = dist.total();
        for t in 1..=t_total {
            let q = epoch_target(t, t_total, n, &dist).unwrap().q;
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(q.windows(2).all(|w| w[0] >= w[1]));
        }
        let c = dist.num_classes();
        prop_assert!(epoch_target(1, t_total, n, &dist).unwrap().q.iter().all(|&v| v == 1.0 / c as f64));
        let last = epoch_target(t_total, t_total, n, &dist).unwrap().q;
        let law = common::rank_law(c, 0.3 * dist.alpha_cap());
        for (a, b) in last.iter().zip(&law) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn powerlaw_density_integrates_to_one() {
    for (n_min, gamma, alpha) in [(1.0, 0.3, 5.0), (10.0, 0.3, 5.0), (7.0, 0.5, 6.0), (100.0, 0.3, 10.0), (3.0, 1.0, 1.5)] {
        let mass = common::powerlaw_mass(n_min, gamma, alpha, |n| powerlaw_pdf(n, n_min, gamma, alpha).unwrap());
        assert!((mass - 1.0).abs() < 1e-6, "n_min={n_min} gamma={gamma} alpha={alpha}: mass {mass}");
    }
}

#[test]
fn fit_examples_agree_with_grid() {
    for counts in [vec![100u64, 50, 10], vec![1000, 1]] {
        let closed = fit_alpha(&counts, 0.3, 0.0).unwrap().cap();
        let grid = common::grid_search_alpha(&counts, 0.3, 1e-3);
        assert!((closed - grid).abs() <= 1e-3, "{closed} vs {grid}");
    }
}

fn random_table(counts: &[u64], salt: u64) -> DifficultyTable {
    let mut records = Vec::new();
    let mut state = salt;
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            // coarse values so ties occur
            let r = ((state >> 40) % 50) as f64 / 20.0;
            records.push(DifficultyRecord {
                sample_id: format!("x{c}_{i}"),
                label: c,
                psi: vec![0.25, 0.25],
                phi: r - 0.25,
                r,
            });
        }
    }
    DifficultyTable { records }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_invariants(counts in prop::collection::vec(1u64..300, 2..10), t_total in 1usize..25, salt in any::<u64>()) {
        let table = random_table(&counts, salt);
        let dist = ClassDistribution::from_counts(counts.clone(), 0.3).unwrap();
        let queues = build_queues(&table, &dist, DifficultyOrder::LargerIsEasier).unwrap();
        let cfg = ScheduleConfig { epochs: t_total, order: DifficultyOrder::LargerIsEasier };
        let schedule = build_schedule(&table, &dist, &cfg).unwrap();
        prop_assert_eq!(&schedule, &build_schedule(&table, &dist, &cfg).unwrap());
        let n = table.len() as u64;
        for plan in &schedule.epochs {
            let expected = (2 * plan.epoch as u64 * n + t_total as u64) / (2 * t_total as u64);
            prop_assert_eq!(plan.total(), expected);
            for (s, q) in plan.subsets.iter().zip(&queues) {
                prop_assert_eq!(s.class_id, q.class_id);
                prop_assert!(s.sample_ids.len() <= q.samples.len());
                prop_assert_eq!(&s.sample_ids[..], &q.samples[..s.sample_ids.len()]);
            }
        }
        prop_assert_eq!(schedule.epochs.last().unwrap().counts_by_class(), counts);
    }
}
