use lbal_core::metrics::{category_coverage, occurrence_histogram, per_class_counts};
use lbal_core::strategies::{
    select_coreset, select_kmeans_multi, select_kmeans_single, select_max_entropy, select_random,
    select_uniform, select_uniform_kmeans,
};
use lbal_core::synth::{make_blobs, BlobSpec};
use lbal_core::{BudgetSchedule, EmbeddingMatrix, LabelVector, StrategyConfig};
use proptest::prelude::*;

fn balanced_labels(classes: usize, per_class: usize) -> LabelVector {
    LabelVector::new((0..classes * per_class).map(|i| (i % classes) as u32).collect(), None).unwrap()
}

#[test]
fn random_coverage_matches_closed_form() {
    let (c, b) = (10usize, 10usize);
    let labels = balanced_labels(c, 100);
    let schedule = BudgetSchedule::single(b).unwrap();
    let mean = (0..1000)
        .map(|seed| category_coverage(&select_random(labels.len(), &schedule, seed).unwrap().indices, &labels))
        .sum::<f64>()
        / 1000.0;
    let expected = 100.0 * (1.0 - (1.0 - 1.0 / c as f64).powi(b as i32));
    assert!((expected - 65.13).abs() < 0.01);
    assert!((mean - expected).abs() <= 2.0, "{mean} vs {expected}");
}

#[test]
fn random_histogram_follows_binomial() {
    let (c, per_class, b) = (10usize, 1000usize, 30usize);
    let labels = balanced_labels(c, per_class);
    let schedule = BudgetSchedule::single(b).unwrap();
    let mut observed = vec![0usize; b + 1];
    let seeds = 1000;
    for seed in 0..seeds {
        let sel = select_random(labels.len(), &schedule, seed).unwrap();
        for count in per_class_counts(&sel.indices, &labels) {
            observed[count] += 1;
        }
    }
    let total = (seeds as usize * c) as f64;
    let p = 1.0 / c as f64;
    let pmf = |m: usize| {
        let mut coef = 1.0f64;
        for i in 0..m {
            coef *= (b - i) as f64 / (i + 1) as f64;
        }
        coef * p.powi(m as i32) * (1.0 - p).powi((b - m) as i32)
    };
    // bins with expected count >= 5, tails pooled into the edge bins
    let expected: Vec<f64> = (0..=b).map(|m| pmf(m) * total).collect();
    let lo = expected.iter().position(|&e| e >= 5.0).unwrap();
    let hi = expected.iter().rposition(|&e| e >= 5.0).unwrap();
    let mut bins = Vec::new();
    for m in lo..=hi {
        let (mut o, mut e) = (observed[m] as f64, expected[m]);
        if m == lo {
            o += observed[..lo].iter().sum::<usize>() as f64;
            e += expected[..lo].iter().sum::<f64>();
        }
        if m == hi {
            o += observed[hi + 1..].iter().sum::<usize>() as f64;
            e += expected[hi + 1..].iter().sum::<f64>();
        }
        bins.push((o, e));
    }
    let chi2: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (bins.len() - 1) as f64;
    // Wilson-Hilferty upper 0.1% point
    let z = 3.0902;
    let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
    assert!(chi2 < crit, "chi2 {chi2} >= {crit} (df {df})");
}

#[test]
fn kmeans_covers_every_separated_blob() {
    for seed in 0..20 {
        let (m, labels) = make_blobs(&BlobSpec::balanced(10, 50, 16, 10.0, 0.1, seed)).unwrap();
        let sel = select_kmeans_single(&m, 10, &StrategyConfig::with_seed(seed)).unwrap();
        assert_eq!(category_coverage(&sel.indices, &labels), 100.0, "seed {seed}");
        let hist = occurrence_histogram(&sel.indices, &labels);
        assert_eq!(hist.get(&1), Some(&10));
    }
}

#[test]
fn uniform_kmeans_equals_kmeans_on_blobs() {
    for seed in 0..5 {
        let (m, _) = make_blobs(&BlobSpec::balanced(8, 40, 6, 10.0, 0.1, seed)).unwrap();
        let cfg = StrategyConfig::with_seed(seed);
        let mut a = select_kmeans_single(&m, 8, &cfg).unwrap().indices;
        let mut b = select_uniform_kmeans(&m, 8, 1, &cfg).unwrap().indices;
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }
}

#[test]
fn uniform_kmeans_exhaustion() {
    let (m, _) = make_blobs(&BlobSpec::balanced(3, 4, 2, 10.0, 0.1, 1)).unwrap();
    let sel = select_uniform_kmeans(&m, 3, 4, &StrategyConfig::with_seed(0)).unwrap();
    let mut idx = sel.indices;
    idx.sort_unstable();
    assert_eq!(idx, (0..12).collect::<Vec<_>>());
}

#[test]
fn multi_round_contract() {
    let (m, _) = make_blobs(&BlobSpec::balanced(10, 30, 8, 10.0, 1.0, 9)).unwrap();
    let cfg = StrategyConfig::with_seed(4);
    let sel = select_kmeans_multi(&m, &"10,20,50".parse().unwrap(), &cfg).unwrap();
    sel.validate(m.n()).unwrap();
    assert_eq!(sel.round_boundaries, vec![10, 20, 50]);
    assert_eq!(sel.round(2).len(), 30);

    let single = select_kmeans_single(&m, 25, &cfg).unwrap();
    let multi = select_kmeans_multi(&m, &BudgetSchedule::single(25).unwrap(), &cfg).unwrap();
    assert_eq!(single.indices, multi.indices);

    // adding rounds never perturbs earlier ones
    let short = select_kmeans_multi(&m, &"10,20".parse().unwrap(), &cfg).unwrap();
    assert_eq!(short.indices, sel.indices[..20]);
}

#[test]
fn max_entropy_rounds_on_blobs() {
    let (m, labels) = make_blobs(&BlobSpec::balanced(4, 25, 4, 3.0, 1.0, 2)).unwrap();
    let initial = select_uniform(&labels, 2, 0, false).unwrap();
    let sel = select_max_entropy(
        &m,
        &"8,12,20".parse().unwrap(),
        &initial,
        &labels,
        &StrategyConfig::with_seed(0),
    )
    .unwrap();
    sel.validate(m.n()).unwrap();
    assert_eq!(&sel.indices[..8], &initial.indices[..]);
    let again = select_max_entropy(
        &m,
        &"8,12,20".parse().unwrap(),
        &initial,
        &labels,
        &StrategyConfig::with_seed(0),
    )
    .unwrap();
    assert_eq!(sel, again);
}

#[test]
fn l2_flag_changes_feature_space() {
    // two directions at very different radii: raw distances separate by
    // radius, cosine space separates by direction
    let rows: Vec<Vec<f32>> = (0..20)
        .map(|i| {
            let r = if i < 10 { 1.0 } else { 100.0 };
            if i % 2 == 0 { vec![r, 0.01 * i as f32] } else { vec![0.01 * i as f32, r] }
        })
        .collect();
    let m = EmbeddingMatrix::from_rows(&rows).unwrap();
    let mut cfg = StrategyConfig::with_seed(0);
    cfg.normalize_features = true;
    let sel = select_kmeans_single(&m, 2, &cfg).unwrap();
    let parity: Vec<usize> = sel.indices.iter().map(|i| i % 2).collect();
    assert!(parity.contains(&0) && parity.contains(&1));
}

fn pool() -> impl Strategy<Value = (EmbeddingMatrix, Vec<usize>, u64)> {
    (3usize..60, 1usize..4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-5.0f32..5.0, n * d)
                .prop_map(move |v| EmbeddingMatrix::from_vec(n, d, v).unwrap()),
            prop::collection::vec(1usize..=n / 3, 1..=3).prop_map(move |mut steps| {
                steps.sort_unstable();
                steps.dedup();
                let mut acc = 0;
                steps.iter().map(|s| { acc += s; acc.min(n) }).collect::<Vec<_>>()
            }),
            any::<u64>(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_strategy_returns_a_valid_selection((m, sched, seed) in pool()) {
        let mut sched = sched;
        sched.dedup();
        let schedule = BudgetSchedule::new(sched).unwrap();
        let cfg = StrategyConfig::with_seed(seed);
        let n = m.n();
        let first = schedule.cumulative()[0];

        let r = select_random(n, &schedule, seed).unwrap();
        r.validate(n).unwrap();
        let k = select_kmeans_single(&m, schedule.total(), &cfg).unwrap();
        k.validate(n).unwrap();
        let km = select_kmeans_multi(&m, &schedule, &cfg).unwrap();
        km.validate(n).unwrap();
        prop_assert_eq!(&km, &select_kmeans_multi(&m, &schedule, &cfg).unwrap());

        let init = select_random(n, &BudgetSchedule::single(first).unwrap(), seed).unwrap();
        let c = select_coreset(&m, &schedule, &init, &cfg).unwrap();
        c.validate(n).unwrap();
        prop_assert_eq!(&c.indices[..first], &init.indices[..]);

        let uk = select_uniform_kmeans(&m, 1, first, &cfg).unwrap();
        uk.validate(n).unwrap();
    }

    #[test]
    fn coverage_ignores_order_and_histogram_zero_bucket_matches(
        labels in prop::collection::vec(0u32..6, 1..40),
        seed in any::<u64>(),
    ) {
        let labels = LabelVector::new(labels, Some(8)).unwrap();
        let n = labels.len();
        let b = 1 + (seed as usize % n);
        let sel = select_random(n, &BudgetSchedule::single(b).unwrap(), seed).unwrap();
        let cov = category_coverage(&sel.indices, &labels);
        let mut rev = sel.indices.clone();
        rev.reverse();
        prop_assert_eq!(cov, category_coverage(&rev, &labels));
        let hist = occurrence_histogram(&sel.indices, &labels);
        prop_assert_eq!(hist.values().sum::<usize>(), 8);
        let zero = hist[&0] as f64;
        prop_assert!((zero - 8.0 * (100.0 - cov) / 100.0).abs() < 1e-9);
        prop_assert_eq!(per_class_counts(&sel.indices, &labels).iter().sum::<usize>(), b);
    }
}
