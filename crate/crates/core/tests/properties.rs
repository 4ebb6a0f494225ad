use std::collections::BTreeSet;

use oodkit::datamodel::{
    read_dataset, read_embeddings, save_dataset, validate_alignment, write_embeddings, Dataset, EmbeddingRow,
    EmbeddingSet, LogProbRow, ModelBundle, Record, Split, TokenLogProbSet,
};
use oodkit::density::{fit_gmm, GmmParams};
use oodkit::eval::{aupr_ood, auroc, fpr_at_tpr, ScoredSet};
use oodkit::likelihood::{
    make_noisy_corpus, score_ln, score_lr, score_nlr, uniform_logprobs, LikelihoodMethod, LikelihoodScore,
    NoiseConfig, likelihood_score,
};
use oodkit::replearn::{cluster_loss, contrastive_loss, initialize, soft_assign, target_distribution, TrainConfig};
use oodkit::splits::{coverage_spec, fixed_ood_spec, make_coverage_split};
use proptest::prelude::*;

fn grid_scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), 1..max)
}

fn scored_set() -> impl Strategy<Value = ScoredSet<f64>> {
    (grid_scores(40), grid_scores(40)).prop_map(|(o, i)| ScoredSet::new(o, i))
}

fn metrics(s: &ScoredSet<f64>) -> [f64; 3] {
    [auroc(s).unwrap(), aupr_ood(s).unwrap(), fpr_at_tpr(s, 0.95).unwrap()]
}

fn vector(d: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, d)
}

fn matrix(rows: usize, d: usize, range: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(vector(d, range), rows)
}

/// A Q matrix from random embeddings and centroids.
fn q_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..8, 1usize..5, 1usize..5, 0.3f64..3.0).prop_flat_map(|(m, k, d, alpha)| {
        (matrix(m, d, 3.0), matrix(k, d, 3.0)).prop_map(move |(e, c)| {
            e.iter().map(|x| soft_assign(x, &c, alpha).unwrap()).collect()
        })
    })
}

fn labeled_dataset() -> impl Strategy<Value = Dataset> {
    let record = (0usize..5, 0usize..3, "[a-c ]{0,12}");
    prop::collection::vec(record, 12..60).prop_map(|rows| {
        let mut records: Vec<Record> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, split, text))| Record {
                id: format!("r{i}"),
                text,
                label: Some(format!("c{label}")),
                split: [Split::Train, Split::Valid, Split::Test][split],
                is_ood: None,
            })
            .collect();
        // Every class gets at least one training record.
        for (c, r) in records.iter_mut().take(5).enumerate() {
            r.label = Some(format!("c{c}"));
            r.split = Split::Train;
        }
        Dataset::new(records).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn metrics_lie_in_unit_interval(s in scored_set()) {
        for v in metrics(&s) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn metrics_invariant_under_increasing_maps(s in scored_set()) {
        let before = metrics(&s);
        for f in [|x: f64| 2.0 * x + 7.0, f64::exp, |x: f64| x * x * x] {
            let t = ScoredSet::new(s.ood_scores.iter().map(|&x| f(x)).collect(), s.id_scores.iter().map(|&x| f(x)).collect());
            prop_assert_eq!(metrics(&t), before);
        }
    }

    #[test]
    fn auroc_survives_negation_with_role_swap(s in scored_set()) {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let swapped = ScoredSet::new(neg(&s.id_scores), neg(&s.ood_scores));
        prop_assert!((auroc(&swapped).unwrap() - auroc(&s).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn fpr_nondecreasing_in_level(s in scored_set(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(fpr_at_tpr(&s, lo).unwrap() <= fpr_at_tpr(&s, hi).unwrap());
    }

    #[test]
    fn assignment_rows_are_stochastic(q in q_matrix()) {
        let p = target_distribution(&q).unwrap();
        for row in q.iter().chain(&p) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn single_row_target_is_identity(q in q_matrix()) {
        let one = vec![q[0].clone()];
        prop_assert_eq!(target_distribution(&one).unwrap(), one);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(q in q_matrix()) {
        let p = target_distribution(&q).unwrap();
        prop_assert!(cluster_loss(&p, &q).unwrap().value >= -1e-12);
        prop_assert!(cluster_loss(&q, &q).unwrap().value.abs() <= 1e-12);
    }

    #[test]
    fn contrastive_ignores_row_scale(
        z in (2usize..6, 2usize..6).prop_flat_map(|(pairs, d)| matrix(2 * pairs, d, 2.0)),
        scales in prop::collection::vec(0.1f64..10.0, 12),
        tau in 0.1f64..1.5,
    ) {
        prop_assume!(z.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
        let scaled: Vec<Vec<f64>> = z.iter().zip(&scales).map(|(r, s)| r.iter().map(|v| v * s).collect()).collect();
        let (a, b) = (contrastive_loss(&z, tau).unwrap(), contrastive_loss(&scaled, tau).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn losses_equivariant_under_batch_permutation(
        z in (2usize..6, 2usize..5).prop_flat_map(|(pairs, d)| matrix(2 * pairs, d, 2.0)),
        q in q_matrix(),
        seed in any::<u64>(),
    ) {
        prop_assume!(z.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-6));
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..z.len() / 2).collect();
        order.shuffle(&mut rng);
        let zp: Vec<Vec<f64>> = order.iter().flat_map(|&i| [z[2 * i].clone(), z[2 * i + 1].clone()]).collect();
        let (a, b) = (contrastive_loss(&z, 0.5).unwrap(), contrastive_loss(&zp, 0.5).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));

        let mut rows: Vec<usize> = (0..q.len()).collect();
        rows.shuffle(&mut rng);
        let qp: Vec<Vec<f64>> = rows.iter().map(|&i| q[i].clone()).collect();
        let l = cluster_loss(&target_distribution(&q).unwrap(), &q).unwrap().value;
        let lp = cluster_loss(&target_distribution(&qp).unwrap(), &qp).unwrap().value;
        prop_assert!((l - lp).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gmm_fit_is_monotone_and_finite(
        pts in (1usize..5).prop_flat_map(|d| matrix(40, d, 5.0)),
        c in 1usize..4,
        seed in any::<u64>(),
        probe in vector(4, 1e6),
    ) {
        let g = fit_gmm(&pts, &GmmParams { components: c, seed, ..Default::default() }).unwrap();
        for w in g.fit_log.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(g.weights.iter().all(|&w| w > 0.0));
        prop_assert!(g.variances.iter().flatten().all(|&v| v >= 1e-6));
        let x = &probe[..g.dim()];
        prop_assert!(g.log_density(x).unwrap().is_finite());
    }

    #[test]
    fn gmm_translation_equivariance(
        pts in (1usize..5).prop_flat_map(|d| matrix(40, d, 5.0)),
        c in 1usize..3,
        shift in vector(4, 10.0),
        query in vector(4, 5.0),
    ) {
        let d = pts[0].len();
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect();
        let params = GmmParams { components: c, ..Default::default() };
        let (g, h) = (fit_gmm(&pts, &params).unwrap(), fit_gmm(&moved, &params).unwrap());
        let q = &query[..d];
        let qm: Vec<f64> = q.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let (a, b) = (g.log_density(q).unwrap(), h.log_density(&qm).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn coverage_split_invariants(ds in labeled_dataset(), coverage in 0.05f64..0.9, seed in any::<u64>()) {
        let Ok((spec, out)) = make_coverage_split(&ds, coverage, seed) else {
            return Ok(());
        };
        let labels: BTreeSet<String> = ds.records.iter().filter_map(|r| r.label.clone()).collect();
        prop_assert!(spec.id_classes.is_disjoint(&spec.ood_classes));
        prop_assert!(!spec.ood_classes.is_empty());
        prop_assert_eq!(spec.id_classes.union(&spec.ood_classes).cloned().collect::<BTreeSet<_>>(), labels);

        let count = |c: &String| ds.in_split(Split::Train).filter(|r| r.label.as_ref() == Some(c)).count();
        let total = ds.in_split(Split::Train).count() as f64;
        let covered: usize = spec.id_classes.iter().map(count).sum();
        prop_assert!(covered as f64 / total >= coverage);
        // Minimal prefix: some ID class cannot be dropped without losing coverage.
        prop_assert!(spec.id_classes.iter().any(|c| ((covered - count(c)) as f64 / total) < coverage));

        for r in &out.records {
            let ood = r.label.as_ref().is_some_and(|l| spec.ood_classes.contains(l));
            match r.split {
                Split::Train => prop_assert_eq!(r.is_ood, Some(false)),
                _ => prop_assert_eq!(r.is_ood, Some(ood)),
            }
        }
        prop_assert_eq!(coverage_spec(&ds, coverage, seed).unwrap(), spec);
    }

    #[test]
    fn fixed_split_partitions_labels(ds in labeled_dataset(), n in 1usize..5, seed in any::<u64>()) {
        let spec = fixed_ood_spec(&ds, n, seed).unwrap();
        prop_assert_eq!(spec.ood_classes.len(), n);
        prop_assert!(spec.id_classes.is_disjoint(&spec.ood_classes));
        prop_assert_eq!(spec.id_classes.len() + n, 5);
        prop_assert_eq!(fixed_ood_spec(&ds, n, seed).unwrap(), spec);
    }

    #[test]
    fn raising_id_logprobs_lowers_every_ood_score(
        (id, bg) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(-12.0f64..-0.01, n), prop::collection::vec(-12.0f64..-0.01, n))),
        bump in 1e-3f64..0.5,
    ) {
        let raised: Vec<f64> = id.iter().map(|v| (v + bump).min(0.0)).collect();
        prop_assume!(raised.iter().zip(&id).all(|(a, b)| a > b));
        let before = likelihood_score("x", &id, Some(&bg)).unwrap();
        let after = likelihood_score("x", &raised, Some(&bg)).unwrap();
        for m in [LikelihoodMethod::Ln, LikelihoodMethod::Lr, LikelihoodMethod::Nlr] {
            prop_assert!(after.ood_score(m).unwrap().score < before.ood_score(m).unwrap().score);
        }
    }

    #[test]
    fn nlr_is_difference_of_ln(
        (id, bg) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(-12.0f64..-0.01, n), prop::collection::vec(-12.0f64..-0.01, n))),
        vocab in 1usize..5000,
    ) {
        prop_assert_eq!(score_nlr(&id, &bg).unwrap(), score_ln(&id).unwrap() - score_ln(&bg).unwrap());
        prop_assert_eq!(score_lr(&id, &id).unwrap(), 0.0);
        let uniform = uniform_logprobs(id.len(), vocab);
        let nlr = score_nlr(&id, &uniform).unwrap();
        prop_assert!((nlr - (score_ln(&id).unwrap() + (vocab as f64).ln())).abs() <= 1e-12);
    }

    #[test]
    fn noising_preserves_lengths_and_is_seeded(
        corpus in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 0..10), 1..20),
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(corpus.iter().any(|s| !s.is_empty()));
        let cfg = NoiseConfig { p_noise: p, seed };
        let a = make_noisy_corpus(&corpus, &cfg).unwrap();
        prop_assert_eq!(a.sentences.iter().map(Vec::len).collect::<Vec<_>>(), corpus.iter().map(Vec::len).collect::<Vec<_>>());
        prop_assert_eq!(make_noisy_corpus(&corpus, &cfg).unwrap(), a);
    }

    #[test]
    fn embeddings_round_trip_bit_exact(
        rows in (1usize..8).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), d), 0..10)),
    ) {
        let dim = rows.first().map_or(3, Vec::len);
        let set = EmbeddingSet::new(dim, rows.into_iter().enumerate().map(|(i, vector)| EmbeddingRow { id: format!("e{i}"), vector }).collect()).unwrap();
        let mut buf = Vec::new();
        write_embeddings(&set, &mut buf).unwrap();
        let back: EmbeddingSet<f32> = read_embeddings(buf.as_slice()).unwrap();
        prop_assert_eq!(back.rows.len(), set.rows.len());
        for (a, b) in back.rows.iter().zip(&set.rows) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert!(a.vector.iter().zip(&b.vector).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn dataset_round_trip(ds in labeled_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save_dataset(&ds, &path).unwrap();
        let back = read_dataset(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn alignment_succeeds_iff_id_sets_match(
        a in prop::collection::btree_set("[a-d]{1,2}", 1..8),
        b in prop::collection::btree_set("[a-d]{1,2}", 1..8),
    ) {
        let ds = Dataset::new(a.iter().map(|id| Record { id: id.clone(), text: "t".into(), label: None, split: Split::Test, is_ood: None }).collect()).unwrap();
        let lp = TokenLogProbSet { header: None, rows: b.iter().map(|id| LogProbRow { id: id.clone(), logprobs: vec![-1.0], tokens: None }).collect() };
        let fwd = validate_alignment(&ds, &lp);
        let rev = validate_alignment(&lp, &ds);
        prop_assert_eq!(fwd.is_aligned(), a == b);
        prop_assert_eq!(rev.is_aligned(), a == b);
        prop_assert_eq!(fwd.missing, rev.extra);
    }

    #[test]
    fn bundle_round_trip(
        data in (2usize..5).prop_flat_map(|d| matrix(12, d, 3.0)),
        threshold in -1e6f64..1e6,
        seed in any::<u64>(),
        with_encoder in any::<bool>(),
    ) {
        let mut bundle = ModelBundle::new(seed);
        bundle.gmm = Some(fit_gmm(&data, &GmmParams { components: 2, seed, ..Default::default() }).unwrap());
        bundle.threshold = Some(threshold);
        if with_encoder {
            let cfg = TrainConfig { k: 2, batch_size: 4, seed, ..Default::default() };
            let params = initialize(&data, &cfg).unwrap();
            bundle.encoder_state = Some(oodkit::replearn::EncoderState { params, config: cfg, trace: vec![] });
        }
        bundle.config.insert("note".into(), serde_json::json!({"k": 2, "x": threshold}));
        prop_assert_eq!(ModelBundle::from_json(&bundle.to_json()).unwrap(), bundle);
    }
}

#[test]
fn likelihood_score_fields_agree() {
    let s: LikelihoodScore = likelihood_score("a", &[-1.0, -3.0], Some(&[-2.0, -2.0])).unwrap();
    assert_eq!(s.log_lr, Some(0.0));
    assert_eq!(s.log_nlr, Some(0.0));
    assert_eq!(s.length, 2);
}
