use lbal_core::strategies::{select_coreset, select_random};
use lbal_core::{BudgetSchedule, EmbeddingMatrix, StrategyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Re-scans every unselected point against the whole selected prefix and
/// returns the farthest one (lowest index on ties).
fn brute_force_next(m: &EmbeddingMatrix, selected: &[usize]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..m.n() {
        if selected.contains(&i) {
            continue;
        }
        let min = selected
            .iter()
            .map(|&s| {
                m.row(i)
                    .iter()
                    .zip(m.row(s))
                    .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        match best {
            Some((_, b)) if min <= b => {}
            _ => best = Some((i, min)),
        }
    }
    best.unwrap().0
}

#[test]
fn every_pick_is_the_farthest_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for inst in 0..150 {
        let n = rng.random_range(2..=80);
        let d = rng.random_range(1..=8);
        // coarse grid values make exact distance ties common
        let data: Vec<f32> = (0..n * d).map(|_| rng.random_range(-3..=3) as f32).collect();
        let m = EmbeddingMatrix::from_vec(n, d, data).unwrap();
        let init_size = rng.random_range(1..n);
        let total = rng.random_range(init_size + 1..=n);
        let initial = select_random(n, &BudgetSchedule::single(init_size).unwrap(), inst).unwrap();
        let schedule = BudgetSchedule::new(vec![init_size, total]).unwrap();
        let sel = select_coreset(&m, &schedule, &initial, &StrategyConfig::with_seed(inst)).unwrap();
        sel.validate(n).unwrap();
        for step in init_size..total {
            assert_eq!(
                sel.indices[step],
                brute_force_next(&m, &sel.indices[..step]),
                "instance {inst} step {step}"
            );
        }
    }
}

#[test]
fn exhausting_the_pool_returns_every_point() {
    let m = EmbeddingMatrix::from_vec(6, 1, vec![0.0, 4.0, 1.0, 9.0, 2.0, 2.0]).unwrap();
    let initial = select_random(6, &BudgetSchedule::single(2).unwrap(), 0).unwrap();
    let sel = select_coreset(&m, &"2,6".parse().unwrap(), &initial, &StrategyConfig::with_seed(0))
        .unwrap();
    let mut idx = sel.indices.clone();
    idx.sort_unstable();
    assert_eq!(idx, (0..6).collect::<Vec<_>>());
}
