//! Sample-selection strategies.
//!
//! Every strategy is a pure function of its inputs and seed and returns a
//! [`SelectionResult`]. Label-blind strategies take no label argument.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifiers::{entropy, probe_predict_proba, probe_train, TrainSchedule};
use crate::error::{Error, Result};
use crate::kmeans::{self, sq_dist, sq_dist_rows, KMeansParams};
use crate::rng::{derive_seed, seeded, shuffle_prefix};
use crate::store::{l2_normalize, EmbeddingMatrix, LabelVector, SelectionResult};

/// Strictly increasing cumulative labeled-set sizes, one per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSchedule(Vec<usize>);

impl BudgetSchedule {
    pub fn new(cumulative: Vec<usize>) -> Result<Self> {
        if cumulative.is_empty() {
            return Err(Error::Argument("budget schedule is empty".into()));
        }
        if cumulative[0] == 0 {
            return Err(Error::Argument("budgets must be positive".into()));
        }
        if cumulative.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(format!(
                "budget schedule {cumulative:?} is not strictly increasing"
            )));
        }
        Ok(Self(cumulative))
    }

    pub fn single(budget: usize) -> Result<Self> {
        Self::new(vec![budget])
    }

    pub fn cumulative(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        *self.0.last().expect("non-empty")
    }

    pub fn rounds(&self) -> usize {
        self.0.len()
    }

    fn check_pool(&self, n: usize) -> Result<()> {
        if self.total() > n {
            return Err(Error::Argument(format!(
                "budget {} exceeds pool size {n}",
                self.total()
            )));
        }
        Ok(())
    }
}

impl FromStr for BudgetSchedule {
    type Err = Error;

    /// Comma-separated cumulative sizes, e.g. `10,20,50`.
    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Argument(format!("bad budget entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sizes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Uniform,
    UniformCapped,
    KmeansSingle,
    KmeansMulti,
    Coreset,
    MaxEntropy,
    UniformKmeans,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Random,
        Strategy::Uniform,
        Strategy::UniformCapped,
        Strategy::KmeansSingle,
        Strategy::KmeansMulti,
        Strategy::Coreset,
        Strategy::MaxEntropy,
        Strategy::UniformKmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Uniform => "uniform",
            Strategy::UniformCapped => "uniform_capped",
            Strategy::KmeansSingle => "kmeans_single",
            Strategy::KmeansMulti => "kmeans_multi",
            Strategy::Coreset => "coreset",
            Strategy::MaxEntropy => "max_entropy",
            Strategy::UniformKmeans => "uniform_kmeans",
        }
    }

    pub fn needs_labels(self) -> bool {
        matches!(
            self,
            Strategy::Uniform | Strategy::UniformCapped | Strategy::MaxEntropy
        )
    }

    /// Strategies that grow an initial labeled pool round by round.
    pub fn is_iterative(self) -> bool {
        matches!(self, Strategy::Coreset | Strategy::MaxEntropy)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    /// Accepts the canonical names with `-` or `_`, plus `kmeans` for
    /// `kmeans_single`.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        if key == "kmeans" {
            return Ok(Strategy::KmeansSingle);
        }
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::Argument(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub seed: u64,
    /// L2-normalize rows before clustering, core-set distances and probing.
    pub normalize_features: bool,
    /// Multi-round K-means clusters only the not-yet-selected rows.
    pub recluster_unlabeled_only: bool,
    pub kmeans: KMeansParams,
    /// Probe schedule for max-entropy; `None` picks lr 0.001 with a batch
    /// size from [`TrainSchedule::batch_size_for_pool`].
    pub probe: Option<TrainSchedule>,
}

impl StrategyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            normalize_features: false,
            recluster_unlabeled_only: false,
            kmeans: KMeansParams::default(),
            probe: None,
        }
    }

    fn features<'a>(&self, m: &'a EmbeddingMatrix) -> Cow<'a, EmbeddingMatrix> {
        if self.normalize_features {
            Cow::Owned(l2_normalize(m))
        } else {
            Cow::Borrowed(m)
        }
    }

    /// Seed of round `t`; round 0 uses the base seed.
    pub fn round_seed(&self, t: usize) -> u64 {
        derive_seed(self.seed, t as u64)
    }
}

fn result(
    strategy: Strategy,
    seed: u64,
    schedule: Vec<usize>,
    indices: Vec<usize>,
) -> SelectionResult {
    SelectionResult {
        strategy: strategy.name().to_string(),
        seed,
        round_boundaries: schedule.clone(),
        budget_schedule: schedule,
        indices,
    }
}

/// Uniform sample without replacement: the prefix of a seeded Fisher-Yates
/// shuffle of `0..n`. Later rounds extend the same permutation.
pub fn select_random(n: usize, schedule: &BudgetSchedule, seed: u64) -> Result<SelectionResult> {
    schedule.check_pool(n)?;
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle_prefix(&mut perm, schedule.total(), &mut seeded(seed));
    perm.truncate(schedule.total());
    Ok(result(Strategy::Random, seed, schedule.cumulative().to_vec(), perm))
}

/// Equal random samples per class, classes in ascending order. With `capped`
/// a class smaller than `per_class` contributes all of its members.
pub fn select_uniform(
    labels: &LabelVector,
    per_class: usize,
    seed: u64,
    capped: bool,
) -> Result<SelectionResult> {
    if per_class == 0 {
        return Err(Error::Argument("per-class budget must be positive".into()));
    }
    let mut members = vec![Vec::new(); labels.num_classes()];
    for (i, &l) in labels.as_slice().iter().enumerate() {
        members[l as usize].push(i);
    }
    if !capped {
        if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| m.len() < per_class) {
            return Err(Error::DeficientClass {
                class,
                size: m.len(),
                needed: per_class,
            });
        }
    }
    let mut rng = seeded(seed);
    let mut indices = Vec::new();
    for mut m in members {
        let take = per_class.min(m.len());
        shuffle_prefix(&mut m, take, &mut rng);
        indices.extend_from_slice(&m[..take]);
    }
    if indices.is_empty() {
        return Err(Error::Argument("uniform selection is empty".into()));
    }
    let strategy = if capped {
        Strategy::UniformCapped
    } else {
        Strategy::Uniform
    };
    Ok(result(strategy, seed, vec![indices.len()], indices))
}

/// One K-means run with `k = budget` over the whole pool, then the point
/// nearest each center.
pub fn select_kmeans_single(
    m: &EmbeddingMatrix,
    budget: usize,
    cfg: &StrategyConfig,
) -> Result<SelectionResult> {
    let schedule = BudgetSchedule::single(budget)?;
    schedule.check_pool(m.n())?;
    let x = cfg.features(m);
    let fit = kmeans::fit(&x, budget, cfg.seed, cfg.kmeans)?;
    let indices = kmeans::nearest_to_centroids(&x, &fit.centers, &[])?;
    Ok(result(Strategy::KmeansSingle, cfg.seed, vec![budget], indices))
}

/// Round `t` clusters with `k` equal to the budget increment and takes the
/// nearest not-yet-selected point per center.
pub fn select_kmeans_multi(
    m: &EmbeddingMatrix,
    schedule: &BudgetSchedule,
    cfg: &StrategyConfig,
) -> Result<SelectionResult> {
    schedule.check_pool(m.n())?;
    let x = cfg.features(m);
    let mut selected: Vec<usize> = Vec::with_capacity(schedule.total());
    let mut prev = 0;
    for (t, &target) in schedule.cumulative().iter().enumerate() {
        let k = target - prev;
        let seed = cfg.round_seed(t);
        let picked = if cfg.recluster_unlabeled_only && !selected.is_empty() {
            let mut taken = vec![false; m.n()];
            selected.iter().for_each(|&i| taken[i] = true);
            let free: Vec<usize> = (0..m.n()).filter(|&i| !taken[i]).collect();
            let sub = x.select_rows(&free)?;
            let fit = kmeans::fit(&sub, k, seed, cfg.kmeans)?;
            kmeans::nearest_to_centroids(&sub, &fit.centers, &[])?
                .into_iter()
                .map(|j| free[j])
                .collect()
        } else {
            let fit = kmeans::fit(&x, k, seed, cfg.kmeans)?;
            kmeans::nearest_to_centroids(&x, &fit.centers, &selected)?
        };
        selected.extend(picked);
        prev = target;
    }
    Ok(result(
        Strategy::KmeansMulti,
        cfg.seed,
        schedule.cumulative().to_vec(),
        selected,
    ))
}

/// Round layout for strategies seeded with an initial pool: the initial pool
/// is round 0 unless the schedule already starts at its size.
fn iterative_rounds(
    n: usize,
    schedule: &BudgetSchedule,
    initial: &SelectionResult,
) -> Result<Vec<usize>> {
    schedule.check_pool(n)?;
    initial.validate(n)?;
    let start = initial.indices.len();
    if start == 0 {
        return Err(Error::Argument("initial pool is empty".into()));
    }
    let first = schedule.cumulative()[0];
    if first < start {
        return Err(Error::Argument(format!(
            "schedule starts at {first}, below the initial pool size {start}"
        )));
    }
    let mut rounds = Vec::with_capacity(schedule.rounds() + 1);
    if first > start {
        rounds.push(start);
    }
    rounds.extend_from_slice(schedule.cumulative());
    Ok(rounds)
}

/// Greedy k-center (farthest-first): each pick is the unselected point with
/// the largest minimum Euclidean distance to everything selected so far.
pub fn select_coreset(
    m: &EmbeddingMatrix,
    schedule: &BudgetSchedule,
    initial: &SelectionResult,
    cfg: &StrategyConfig,
) -> Result<SelectionResult> {
    let rounds = iterative_rounds(m.n(), schedule, initial)?;
    let x = cfg.features(m);
    let n = x.n();
    let mut selected = initial.indices.clone();
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let relax = |min_dist: &mut [f64], center: usize| {
        let c = x.row(center);
        for (i, md) in min_dist.iter_mut().enumerate() {
            let dist = sq_dist_rows(x.row(i), c);
            if dist < *md {
                *md = dist;
            }
        }
    };
    for &i in &selected {
        taken[i] = true;
        relax(&mut min_dist, i);
    }
    let total = *rounds.last().expect("non-empty");
    while selected.len() < total {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            if best.is_none_or(|(_, b)| min_dist[i] > b) {
                best = Some((i, min_dist[i]));
            }
        }
        let (pick, _) = best.expect("budget checked against pool size");
        taken[pick] = true;
        selected.push(pick);
        relax(&mut min_dist, pick);
    }
    Ok(result(Strategy::Coreset, cfg.seed, rounds, selected))
}

/// The `k` candidates with the highest entropy, ties to the lower pool index.
/// `probs[j]` is the predicted distribution of `candidates[j]`.
pub fn top_entropy(candidates: &[usize], probs: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .zip(probs)
        .map(|(&i, p)| (entropy(p), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Each round trains a fresh probe on the labeled set and adds the unlabeled
/// points whose predicted class distribution has the highest entropy.
pub fn select_max_entropy(
    m: &EmbeddingMatrix,
    schedule: &BudgetSchedule,
    initial: &SelectionResult,
    labels: &LabelVector,
    cfg: &StrategyConfig,
) -> Result<SelectionResult> {
    if labels.len() != m.n() {
        return Err(Error::Data(format!(
            "{} labels for {} pool rows",
            labels.len(),
            m.n()
        )));
    }
    let rounds = iterative_rounds(m.n(), schedule, initial)?;
    let x = cfg.features(m);
    let mut selected = initial.indices.clone();
    for (t, &target) in rounds.iter().enumerate().skip(1) {
        let train_labels = labels.select(&selected)?;
        let mut present = vec![false; labels.num_classes()];
        train_labels.as_slice().iter().for_each(|&l| present[l as usize] = true);
        let classes = present.iter().filter(|p| **p).count();
        if classes < 2 {
            return Err(Error::DegenerateModel { round: t, classes });
        }
        let schedule = cfg.probe.clone().unwrap_or_else(|| {
            TrainSchedule::max_entropy(TrainSchedule::batch_size_for_pool(selected.len()))
        });
        let model = probe_train(
            &x.select_rows(&selected)?,
            &train_labels,
            &schedule,
            cfg.round_seed(t),
        )?;
        let mut taken = vec![false; x.n()];
        selected.iter().for_each(|&i| taken[i] = true);
        let candidates: Vec<usize> = (0..x.n()).filter(|&i| !taken[i]).collect();
        let probs = probe_predict_proba(&model, &x.select_rows(&candidates)?)?;
        selected.extend(top_entropy(&candidates, &probs, target - selected.len()));
    }
    Ok(result(Strategy::MaxEntropy, cfg.seed, rounds, selected))
}

/// K-means with one cluster per class, then the `per_cluster` members nearest
/// each center. Clusters that are too small give all their members and the
/// shortfall goes to the unselected points closest to any center.
pub fn select_uniform_kmeans(
    m: &EmbeddingMatrix,
    num_classes: usize,
    per_cluster: usize,
    cfg: &StrategyConfig,
) -> Result<SelectionResult> {
    if num_classes == 0 || per_cluster == 0 {
        return Err(Error::Argument("class count and per-cluster budget must be positive".into()));
    }
    let budget = num_classes * per_cluster;
    BudgetSchedule::single(budget)?.check_pool(m.n())?;
    let x = cfg.features(m);
    let fit = kmeans::fit(&x, num_classes, cfg.seed, cfg.kmeans)?;

    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); num_classes];
    for (i, &j) in fit.assignment.iter().enumerate() {
        members[j].push((sq_dist(x.row(i), fit.center(j)), i));
    }
    let mut taken = vec![false; x.n()];
    let mut indices = Vec::with_capacity(budget);
    for mut cluster in members {
        cluster.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in cluster.iter().take(per_cluster) {
            taken[i] = true;
            indices.push(i);
        }
    }
    if indices.len() < budget {
        let mut rest: Vec<(f64, usize)> = (0..x.n())
            .filter(|&i| !taken[i])
            .map(|i| {
                let d = (0..num_classes)
                    .map(|j| sq_dist(x.row(i), fit.center(j)))
                    .fold(f64::INFINITY, f64::min);
                (d, i)
            })
            .collect();
        rest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let short = budget - indices.len();
        indices.extend(rest.into_iter().take(short).map(|(_, i)| i));
    }
    Ok(result(Strategy::UniformKmeans, cfg.seed, vec![budget], indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn initial(indices: Vec<usize>) -> SelectionResult {
        let len = indices.len();
        result(Strategy::Random, 0, vec![len], indices)
    }

    #[test]
    fn schedule_validation() {
        assert!(BudgetSchedule::new(vec![]).is_err());
        assert!(BudgetSchedule::new(vec![0]).is_err());
        assert!(BudgetSchedule::new(vec![5, 5]).is_err());
        assert_eq!("10, 20,50".parse::<BudgetSchedule>().unwrap().total(), 50);
        assert!("10,x".parse::<BudgetSchedule>().is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(s.name().replace('_', "-").parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("kmeans".parse::<Strategy>().unwrap(), Strategy::KmeansSingle);
        assert!("vaal".parse::<Strategy>().is_err());
    }

    #[test]
    fn random_exhaustion_and_overflow() {
        let sel = select_random(5, &BudgetSchedule::single(5).unwrap(), 1).unwrap();
        let mut idx = sel.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(select_random(5, &BudgetSchedule::single(6).unwrap(), 1).is_err());
        assert!(BudgetSchedule::single(0).is_err());
    }

    #[test]
    fn random_rounds_extend_the_same_permutation() {
        let one = select_random(100, &BudgetSchedule::single(30).unwrap(), 4).unwrap();
        let many = select_random(100, &"10,30".parse().unwrap(), 4).unwrap();
        assert_eq!(one.indices, many.indices);
        assert_eq!(many.round_boundaries, vec![10, 30]);
    }

    #[test]
    fn uniform_examples() {
        let l = LabelVector::new(vec![0, 0, 1, 1, 2, 2], None).unwrap();
        let sel = select_uniform(&l, 1, 0, false).unwrap();
        let classes: Vec<u32> = sel.indices.iter().map(|&i| l.get(i)).collect();
        assert_eq!(classes, vec![0, 1, 2]);

        let l = LabelVector::new(vec![0, 0, 0, 1], None).unwrap();
        let sel = select_uniform(&l, 2, 0, true).unwrap();
        let classes: Vec<u32> = sel.indices.iter().map(|&i| l.get(i)).collect();
        assert_eq!(classes, vec![0, 0, 1]);
        assert_eq!(sel.strategy, "uniform_capped");
        match select_uniform(&l, 2, 0, false) {
            Err(Error::DeficientClass { class: 1, size: 1, needed: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_uncapped_rejects_absent_declared_class() {
        let l = LabelVector::new(vec![0, 1], Some(3)).unwrap();
        assert!(matches!(
            select_uniform(&l, 1, 0, false),
            Err(Error::DeficientClass { class: 2, .. })
        ));
        assert_eq!(select_uniform(&l, 1, 0, true).unwrap().indices.len(), 2);
    }

    #[test]
    fn kmeans_single_full_budget_takes_everything() {
        let m = mat(&[&[0.0], &[1.0], &[5.0], &[9.0]]);
        let sel = select_kmeans_single(&m, 4, &StrategyConfig::with_seed(0)).unwrap();
        let mut idx = sel.indices;
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_multi_two_rounds_on_three_points() {
        // round 0: one center at the global mean (3.367, 3.333); nearest is
        // (0.1, 0) at squared distance 21.78 vs 22.45 for the origin and 88.8
        // for (10, 10). Round 1 re-clusters everything with k = 1, the center
        // is the same mean, and the nearest unselected point is the origin.
        let m = mat(&[&[0.0, 0.0], &[0.1, 0.0], &[10.0, 10.0]]);
        let sel =
            select_kmeans_multi(&m, &"1,2".parse().unwrap(), &StrategyConfig::with_seed(3))
                .unwrap();
        assert_eq!(sel.indices, vec![1, 0]);
        assert_eq!(sel.round_boundaries, vec![1, 2]);
    }

    #[test]
    fn kmeans_multi_unlabeled_only_variant_stays_disjoint() {
        let m = mat(&[&[0.0, 0.0], &[0.1, 0.0], &[10.0, 10.0], &[10.0, 9.0], &[5.0, 5.0]]);
        let mut cfg = StrategyConfig::with_seed(1);
        cfg.recluster_unlabeled_only = true;
        let sel = select_kmeans_multi(&m, &"2,4,5".parse().unwrap(), &cfg).unwrap();
        sel.validate(5).unwrap();
    }

    #[test]
    fn coreset_picks_farthest_point() {
        let m = mat(&[&[0.0], &[1.0], &[10.0]]);
        let sel = select_coreset(
            &m,
            &"1,2".parse().unwrap(),
            &initial(vec![0]),
            &StrategyConfig::with_seed(0),
        )
        .unwrap();
        assert_eq!(sel.indices, vec![0, 2]);
        assert_eq!(sel.round_boundaries, vec![1, 2]);

        // schedule not starting at the initial size gets the initial round prepended
        let sel = select_coreset(
            &m,
            &BudgetSchedule::single(3).unwrap(),
            &initial(vec![0]),
            &StrategyConfig::with_seed(0),
        )
        .unwrap();
        assert_eq!(sel.indices, vec![0, 2, 1]);
        assert_eq!(sel.budget_schedule, vec![1, 3]);
    }

    #[test]
    fn coreset_errors() {
        let m = mat(&[&[0.0], &[1.0], &[10.0]]);
        let cfg = StrategyConfig::with_seed(0);
        assert!(select_coreset(&m, &"1,4".parse().unwrap(), &initial(vec![0]), &cfg).is_err());
        assert!(select_coreset(&m, &"1,2".parse().unwrap(), &initial(vec![0, 1]), &cfg).is_err());
    }

    #[test]
    fn top_entropy_examples() {
        let probs = vec![vec![0.5, 0.5], vec![0.9, 0.1], vec![1.0 / 3.0, 2.0 / 3.0]];
        assert_eq!(top_entropy(&[0, 1, 2], &probs, 1), vec![0]);
        assert_eq!(top_entropy(&[0, 1, 2], &probs, 3), vec![0, 2, 1]);
        let uniform = vec![vec![0.25; 4]; 4];
        assert_eq!(top_entropy(&[3, 5, 7, 9], &uniform, 2), vec![3, 5]);
        let with_onehot = vec![vec![1.0, 0.0], vec![0.6, 0.4]];
        assert_eq!(top_entropy(&[0, 1], &with_onehot, 2), vec![1, 0]);
    }

    #[test]
    fn max_entropy_needs_two_classes() {
        let m = mat(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let l = LabelVector::new(vec![0, 0, 1, 1], None).unwrap();
        let err = select_max_entropy(
            &m,
            &"2,3".parse().unwrap(),
            &initial(vec![0, 1]),
            &l,
            &StrategyConfig::with_seed(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateModel { round: 1, classes: 1 }));
    }

    #[test]
    fn max_entropy_prefers_the_boundary() {
        let m = mat(&[&[0.0], &[10.0], &[5.2], &[0.5], &[9.5], &[-3.0]]);
        let l = LabelVector::new(vec![0, 1, 0, 0, 1, 0], None).unwrap();
        let sel = select_max_entropy(
            &m,
            &"2,3".parse().unwrap(),
            &initial(vec![0, 1]),
            &l,
            &StrategyConfig::with_seed(0),
        )
        .unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2]);
    }

    #[test]
    fn uniform_kmeans_shortfall_fills_from_nearest_leftover() {
        // clusters {0, 0.1, 0.2} and {100}; per_cluster = 2 gives the two
        // points nearest 0.1 plus the singleton, then one filler
        let m = mat(&[&[0.0], &[0.1], &[0.2], &[100.0]]);
        let sel = select_uniform_kmeans(&m, 2, 2, &StrategyConfig::with_seed(0)).unwrap();
        let mut idx = sel.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(sel.indices.len(), 4);
        assert!(select_uniform_kmeans(&m, 2, 3, &StrategyConfig::with_seed(0)).is_err());
    }
}
