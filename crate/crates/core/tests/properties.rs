//! Randomized invariants across the public API.

use proptest::prelude::*;

use latent_steer::attributes::CELEBA_ATTRIBUTES;
use latent_steer::celeba::{parse_celeba_attrs, serialize_celeba_attrs, AttributeRecord};
use latent_steer::eval::{eval_consistency, eval_diversity, lock_stability, steer_batch, EvalBatch};
use latent_steer::linalg::{
    canonical_order, cosine_similarity, dot, fit_axes, gram_schmidt, l1_norm, max_abs_deviation_from_identity, norm,
    project, AttributeVector, AxisMatrix, FeatureAxes, FitMetadata, LatentVector, Matrix,
};
use latent_steer::rng::CounterRng;
use latent_steer::steering::{
    apply_move, differentiate, l1_normalize, plan_moves, reweight, steer, AblationGroup, DiffEmbedding, ImageEmbedding,
    NormalizationMode, SteeringConfig, TextEmbedding,
};
use latent_steer::text::{classify_text, AttributeLexicon};
use latent_steer::world::{encode, make_world, sample_dataset, WorldSpec};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_col_major(rows, cols, CounterRng::new(seed, 0).normal_vec(rows * cols)).unwrap()
}

fn random_axes(rows: usize, cols: usize, seed: u64) -> FeatureAxes {
    let meta = FitMetadata {
        method: "gaussian".into(),
        seed: Some(seed),
        samples: 0,
        ridge: 0.0,
    };
    FeatureAxes::from_raw(AxisMatrix::new(gaussian(rows, cols, seed), meta).unwrap()).unwrap()
}

fn target(values: &[f64], mask: &[bool]) -> TextEmbedding {
    let v = values
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { *v } else { 0.0 })
        .collect();
    TextEmbedding::new(AttributeVector::new(v).unwrap(), mask.to_vec()).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order = canonical_order(n);
    let mut rng = CounterRng::new(seed, 99);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_schmidt_is_orthonormal_in_any_order(seed in any::<u64>(), d in 2usize..40, extra in 0usize..8) {
        let n = (d / 2).max(1);
        let b = gaussian(d + extra, n, seed);
        let order = shuffled(n, seed);
        let w = gram_schmidt(&b, &order).unwrap();
        let gram = w.matrix().transpose_mul(w.matrix()).unwrap();
        prop_assert!(max_abs_deviation_from_identity(&gram) <= 1e-10);
        // first processed column is the normalized input column
        let first = order[0];
        let c = cosine_similarity(w.axis(first), b.column(first)).unwrap();
        prop_assert!((c - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gram_schmidt_preserves_spans(seed in any::<u64>(), n in 1usize..6) {
        let b = gaussian(8, n, seed);
        let order = shuffled(n, seed);
        let w = gram_schmidt(&b, &order).unwrap();
        // each processed input column lies in the span of the axes produced so far
        for (i, &k) in order.iter().enumerate() {
            let mut residual = b.column(k).to_vec();
            for &j in &order[..=i] {
                let c = dot(&residual, w.axis(j));
                residual.iter_mut().zip(w.axis(j)).for_each(|(r, a)| *r -= c * a);
            }
            prop_assert!(norm(&residual) <= 1e-9 * norm(b.column(k)).max(1.0));
        }
    }

    #[test]
    fn projection_is_parallel_and_idempotent(v in prop::collection::vec(-10.0f64..10.0, 5), u in prop::collection::vec(-10.0f64..10.0, 5)) {
        prop_assume!(norm(&u) > 1e-3);
        let p = project(&v, &u).unwrap();
        let pp = project(&p, &u).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        // v − proj is orthogonal to u
        let r: Vec<f64> = v.iter().zip(&p).map(|(a, b)| a - b).collect();
        prop_assert!(dot(&r, &u).abs() <= 1e-9 * (1.0 + norm(&v) * norm(&u)));
    }

    #[test]
    fn cosine_is_bounded(a in prop::collection::vec(-1e3f64..1e3, 6), b in prop::collection::vec(-1e3f64..1e3, 6)) {
        prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
        let c = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn differentiate_is_bounded_and_masked(
        trg in prop::collection::vec(0.0f64..=1.0, 12),
        org in prop::collection::vec(0.0f64..=1.0, 12),
        mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        let d = differentiate(&target(&trg, &mask), &ImageEmbedding::new(org).unwrap()).unwrap();
        for (v, m) in d.values().iter().zip(&mask) {
            prop_assert!((-1.0..=1.0).contains(v));
            if !m {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn reweight_is_odd_monotone_and_bounded(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
        let r = reweight(&[a, -a, a.min(b), a.max(b)]).values;
        prop_assert!((r[0] + r[1]).abs() <= 1e-12);
        prop_assert!(r[2] <= r[3]);
        prop_assert!(r.iter().all(|v| v.abs() <= 3f64.sqrt() + 1e-12));
    }

    #[test]
    fn apply_move_is_additive(seed in any::<u64>(), a in prop::collection::vec(-3.0f64..3.0, 4), b in prop::collection::vec(-3.0f64..3.0, 4)) {
        let axes = random_axes(9, 4, seed);
        let z = LatentVector::new(CounterRng::new(seed, 1).normal_vec(9)).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let twice = apply_move(&apply_move(&z, &axes.basis, &a).unwrap(), &axes.basis, &b).unwrap();
        let once = apply_move(&z, &axes.basis, &sum).unwrap();
        for (x, y) in twice.as_slice().iter().zip(once.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn l1_normalize_preserves_direction(values in prop::collection::vec(-50.0f64..50.0, 1..64), reference in 0.1f64..100.0) {
        let x = LatentVector::new(values).unwrap();
        prop_assume!(x.l1_norm() > 1e-9);
        for mode in [NormalizationMode::StrictUnitL1, NormalizationMode::PreserveInitialL1] {
            let y = l1_normalize(&x, mode, reference).unwrap();
            let c = cosine_similarity(x.as_slice(), y.as_slice()).unwrap();
            prop_assert!((c - 1.0).abs() <= 1e-12);
            let want = if mode == NormalizationMode::StrictUnitL1 { 1.0 } else { reference };
            prop_assert!((l1_norm(y.as_slice()) - want).abs() <= 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn plan_weights_are_bounded_and_ordered(
        diff in prop::collection::vec(-1.0f64..=1.0, 10),
        mask in prop::collection::vec(any::<bool>(), 10),
    ) {
        let values: Vec<f64> = diff.iter().zip(&mask).map(|(d, m)| if *m { *d } else { 0.0 }).collect();
        let d = DiffEmbedding::new(values.clone(), mask).unwrap();
        let plan = plan_moves(&d, &SteeringConfig::default());
        for m in &plan {
            prop_assert!(m.weight.abs() <= 1.2 * 3f64.sqrt() + 1e-12);
        }
        for pair in plan.windows(2) {
            let (a, b) = (values[pair[0].attribute].abs(), values[pair[1].attribute].abs());
            prop_assert!(a > b || (a == b && pair[0].attribute < pair[1].attribute));
        }
    }

    #[test]
    fn blank_group_is_one_linear_move(
        seed in any::<u64>(),
        trg in prop::collection::vec(0.0f64..=1.0, 5),
        mask in prop::collection::vec(any::<bool>(), 5),
        step in 0.1f64..3.0,
    ) {
        let axes = random_axes(7, 5, seed);
        let z = LatentVector::new(CounterRng::new(seed, 2).normal_vec(7)).unwrap();
        let t = target(&trg, &mask);
        let org = ImageEmbedding::new(vec![0.5; 5]).unwrap();
        let cfg = AblationGroup::E.config().with_step_size(step);
        let (out, trace) = steer(&z, &t, &org, &axes, &cfg, None).unwrap();
        let weights: Vec<f64> = t.values().iter().map(|v| step * v).collect();
        let expected = apply_move(&z, &axes.basis, &weights).unwrap();
        for (x, y) in out.as_slice().iter().zip(expected.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
        prop_assert!(trace.entries.iter().all(|e| e.l1_after.is_none()));
    }

    #[test]
    fn locked_steering_is_stable_in_orthogonal_worlds(seed in 0u64..1000, world_seed in 0u64..50) {
        let world = make_world(WorldSpec::new(16, 4, 0.0, world_seed).unwrap()).unwrap();
        let raw = fit_axes(&sample_dataset(&world, 400, 3).unwrap(), 1e-3).unwrap();
        let axes = FeatureAxes::from_raw(raw).unwrap();
        let z = LatentVector::new(CounterRng::new(seed, 0).normal_vec(16)).unwrap();
        let t = target(&[1.0, 0.0, 1.0, 0.0], &[true, true, true, false]);
        let org = encode(&world, &z).unwrap();
        let (_, trace) = steer(&z, &t, &org, &axes, &SteeringConfig::default(), Some(&world)).unwrap();
        prop_assert!(lock_stability(&[trace]).unwrap() <= 0.05);
    }

    #[test]
    fn classification_never_sets_unspecified_values(text in "\\PC{0,80}") {
        let lex = AttributeLexicon::default_lexicon();
        let a = classify_text(&text, &lex);
        let b = classify_text(&text, &lex);
        prop_assert_eq!(&a.embedding, &b.embedding);
        for (v, m) in a.embedding.values().iter().zip(a.embedding.mask()) {
            prop_assert!(*m || *v == 0.0);
        }
    }

    #[test]
    fn classification_of_word_salad_is_well_formed(words in prop::collection::vec(prop::sample::select(vec![
        "not", "no", "without", "a", "young", "old", "man", "woman", "smiling", "serious", "beard",
        "blond", "hair", "wavy", ",", ".", "and", "but", "with", "glasses",
    ]), 0..20)) {
        let e = classify_text(&words.join(" "), &AttributeLexicon::default_lexicon()).embedding;
        for (v, m) in e.values().iter().zip(e.mask()) {
            prop_assert!(*v == 0.0 || (*m && *v == 1.0));
        }
    }

    #[test]
    fn celeba_round_trip(labels in prop::collection::vec(prop::collection::vec(prop::bool::ANY, 40), 0..6)) {
        let records: Vec<AttributeRecord> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| AttributeRecord {
                id: format!("{:06}.jpg", i + 1),
                labels: std::array::from_fn(|k| if l[k] { 1 } else { -1 }),
            })
            .collect();
        let text = serialize_celeba_attrs(&records);
        let parsed = parse_celeba_attrs(text.as_bytes()).unwrap();
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(serialize_celeba_attrs(&parsed), text);
    }

    #[test]
    fn encode_stays_in_unit_interval(seed in any::<u64>(), rho in 0.0f64..0.95, sigma in 0.0f64..2.0, scale in 0.1f64..100.0) {
        let mut spec = WorldSpec::new(6, 3, rho, seed).unwrap();
        spec.sigma = sigma;
        let world = make_world(spec).unwrap();
        let z: Vec<f64> = CounterRng::new(seed, 5).normal_vec(6).iter().map(|v| v * scale).collect();
        let p = encode(&world, &LatentVector::new(z).unwrap()).unwrap();
        prop_assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

fn small_batch(seed: u64) -> EvalBatch {
    let world = make_world(WorldSpec::new(8, 3, 0.3, 1).unwrap()).unwrap();
    let axes = FeatureAxes::from_raw(fit_axes(&sample_dataset(&world, 300, 2).unwrap(), 1e-3).unwrap()).unwrap();
    let t = target(&[1.0, 0.0, 1.0], &[true, true, true]);
    let initial = (0..6)
        .map(|s| LatentVector::new(CounterRng::new(seed, s).normal_vec(8)).unwrap())
        .collect();
    steer_batch("t", &t, initial, &axes, &SteeringConfig::default(), &world).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn consistency_max_dominates_mean(seed in any::<u64>()) {
        let c = eval_consistency(&small_batch(seed)).unwrap();
        prop_assert!(c.max >= c.mean);
        prop_assert!((-1.0..=1.0).contains(&c.max) && (-1.0..=1.0).contains(&c.mean));
    }

    #[test]
    fn diversity_ignores_sample_order(seed in any::<u64>(), rot in 0usize..6) {
        let batch = small_batch(seed);
        let mut permuted = batch.clone();
        permuted.samples.rotate_left(rot);
        permuted.samples.swap(0, 5);
        let (m1, s1) = eval_diversity(&batch).unwrap();
        let (m2, s2) = eval_diversity(&permuted).unwrap();
        prop_assert!((m1 - m2).abs() <= 1e-12 && (s1 - s2).abs() <= 1e-12);
    }
}

#[test]
fn attribute_names_are_unique() {
    let mut names = CELEBA_ATTRIBUTES.to_vec();
    names.sort_unstable();
    names.dedup();
    assert_eq!(names.len(), 40);
}
