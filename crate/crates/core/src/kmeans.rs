//! Seeded K-means: k-means++ seeding, Lloyd iterations and extraction of
//! the pool points nearest to each center.
//!
//! All distances are squared Euclidean in `f64`, summed over dimensions in
//! index order. Parallel sections only compute per-point values; every
//! reduction runs sequentially in point order, so results do not depend on
//! the rayon pool size. Ties always go to the lowest index.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{seeded, SeedRng};
use crate::store::EmbeddingMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no center moves farther than this (Euclidean).
    pub tol: f64,
    /// Candidates drawn per k-means++ step; `None` uses [`default_local_trials`].
    pub local_trials: Option<usize>,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
            local_trials: None,
        }
    }
}

/// Candidates per greedy k-means++ step: `2 + floor(ln k)`, at least 8.
pub fn default_local_trials(k: usize) -> usize {
    (2 + (k as f64).ln().floor() as usize).max(8)
}

/// A fitted clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    pub k: usize,
    pub d: usize,
    /// `k x d`, row-major.
    pub centers: Vec<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances of every point to its assigned center.
    pub objective: f64,
    pub iterations_run: usize,
    /// Objective after each assignment step; the last entry is `objective`.
    pub objective_trace: Vec<f64>,
    /// `repaired[t]` is set when the update following assignment `t`
    /// reseeded an empty cluster.
    pub repaired: Vec<bool>,
}

impl Centroids {
    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.d..(j + 1) * self.d]
    }
}

#[inline]
pub fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let t = a as f64 - b;
            t * t
        })
        .sum()
}

#[inline]
pub fn sq_dist_rows(x: &[f32], y: &[f32]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let t = a as f64 - b as f64;
            t * t
        })
        .sum()
}

/// Index into `weights` drawn with probability proportional to weight.
fn sample_weighted(weights: &[f64], total: f64, rng: &mut SeedRng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// Pool rows chosen as initial centers by greedy k-means++.
///
/// The first row is uniform. Each later center draws `2 + floor(ln k)`
/// candidates with probability proportional to the squared distance to the
/// nearest chosen center (D^2 weighting) and keeps the candidate that leaves
/// the smallest total potential (first candidate on ties). Rows already chosen
/// have zero weight; if every remaining row coincides with a chosen one, the
/// next row is uniform among the unchosen.
pub fn kmeanspp_indices(m: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeanspp_indices_with_trials(m, k, seed, default_local_trials(k))
}

/// [`kmeanspp_indices`] with an explicit number of candidates per step
/// (`1` is plain k-means++).
pub fn kmeanspp_indices_with_trials(
    m: &EmbeddingMatrix,
    k: usize,
    seed: u64,
    trials: usize,
) -> Result<Vec<usize>> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k must be in 1..={n}, got {k}")));
    }
    if trials == 0 {
        return Err(Error::Argument("k-means++ needs at least one candidate per step".into()));
    }
    let mut rng = seeded(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];

    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut closest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist_rows(m.row(i), m.row(first)))
        .collect();

    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for _ in 0..trials {
                let cand = sample_weighted(&closest, total, &mut rng);
                let updated: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| closest[i].min(sq_dist_rows(m.row(i), m.row(cand))))
                    .collect();
                let potential: f64 = updated.iter().sum();
                if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                    best = Some((potential, cand, updated));
                }
            }
            let (_, cand, updated) = best.expect("at least one trial");
            closest = updated;
            cand
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        taken[next] = true;
        chosen.push(next);
    }
    Ok(chosen)
}

/// `k x d` initial centers (row-major) from [`kmeanspp_indices`].
pub fn kmeanspp_init(m: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    let idx = kmeanspp_indices(m, k, seed)?;
    Ok(idx
        .iter()
        .flat_map(|&i| m.row(i).iter().map(|&v| v as f64))
        .collect())
}

/// Nearest center and its squared distance; ties to the lowest center.
#[inline]
fn nearest_center(x: &[f32], centers: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(d).enumerate() {
        let dist = sq_dist(x, c);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best
}

fn assign(m: &EmbeddingMatrix, centers: &[f64]) -> Vec<(usize, f64)> {
    let d = m.d();
    (0..m.n())
        .into_par_iter()
        .map(|i| nearest_center(m.row(i), centers, d))
        .collect()
}

/// Lloyd's algorithm from the given `k x d` initial centers.
///
/// Each iteration assigns every point to its nearest center, then moves each
/// center to the mean of its points. A center left without points is
/// reseeded at the point currently farthest from its assigned center. Stops
/// when the largest center movement is at most `tol` or after `max_iter`
/// iterations; the returned assignment is recomputed against the final
/// centers.
pub fn lloyd_fit(m: &EmbeddingMatrix, init: &[f64], params: KMeansParams) -> Result<Centroids> {
    let (n, d) = (m.n(), m.d());
    if init.is_empty() || !init.len().is_multiple_of(d) {
        return Err(Error::Argument(format!(
            "initial centers have {} values, not a multiple of d={d}",
            init.len()
        )));
    }
    let k = init.len() / d;
    if k > n {
        return Err(Error::Argument(format!("k={k} exceeds n={n}")));
    }
    if params.max_iter == 0 || !(params.tol >= 0.0) {
        return Err(Error::Argument("max_iter must be >= 1 and tol >= 0".into()));
    }

    let mut centers = init.to_vec();
    let mut trace = Vec::new();
    let mut repaired = Vec::new();
    let mut iterations_run = 0;

    for it in 1..=params.max_iter {
        iterations_run = it;
        let mut nearest = assign(m, &centers);
        trace.push(nearest.iter().map(|p| p.1).sum());

        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &(j, _)) in nearest.iter().enumerate() {
            counts[j] += 1;
            for (s, &v) in sums[j * d..(j + 1) * d].iter_mut().zip(m.row(i)) {
                *s += v as f64;
            }
        }
        let mut new_centers = sums;
        let mut did_repair = false;
        for j in 0..k {
            let c = &mut new_centers[j * d..(j + 1) * d];
            if counts[j] > 0 {
                let cnt = counts[j] as f64;
                c.iter_mut().for_each(|v| *v /= cnt);
                continue;
            }
            did_repair = true;
            let mut far = (0, -1.0);
            for (i, &(_, dist)) in nearest.iter().enumerate() {
                if dist > far.1 {
                    far = (i, dist);
                }
            }
            let p = far.0;
            for (dst, &v) in c.iter_mut().zip(m.row(p)) {
                *dst = v as f64;
            }
            nearest[p] = (j, 0.0);
        }
        repaired.push(did_repair);

        let movement = centers
            .chunks_exact(d)
            .zip(new_centers.chunks_exact(d))
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if movement <= params.tol {
            break;
        }
    }

    let nearest = assign(m, &centers);
    let objective: f64 = nearest.iter().map(|p| p.1).sum();
    trace.push(objective);
    Ok(Centroids {
        k,
        d,
        centers,
        assignment: nearest.into_iter().map(|p| p.0).collect(),
        objective,
        iterations_run,
        objective_trace: trace,
        repaired,
    })
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn fit(m: &EmbeddingMatrix, k: usize, seed: u64, params: KMeansParams) -> Result<Centroids> {
    let trials = params.local_trials.unwrap_or_else(|| default_local_trials(k));
    let init: Vec<f64> = kmeanspp_indices_with_trials(m, k, seed, trials)?
        .iter()
        .flat_map(|&i| m.row(i).iter().map(|&v| v as f64))
        .collect();
    lloyd_fit(m, &init, params)
}

/// For each center in order, the closest pool row that is neither excluded
/// nor already claimed by an earlier center.
pub fn nearest_to_centroids(
    m: &EmbeddingMatrix,
    centers: &[f64],
    exclude: &[usize],
) -> Result<Vec<usize>> {
    let (n, d) = (m.n(), m.d());
    if !centers.len().is_multiple_of(d) {
        return Err(Error::Argument(format!("center matrix is not a multiple of d={d}")));
    }
    let k = centers.len() / d;
    let mut blocked = vec![false; n];
    for &i in exclude {
        if i >= n {
            return Err(Error::Argument(format!("excluded index {i} out of range")));
        }
        blocked[i] = true;
    }
    let available = blocked.iter().filter(|b| !**b).count();
    if available < k {
        return Err(Error::Argument(format!(
            "{k} centers but only {available} selectable points"
        )));
    }
    let mut picked = Vec::with_capacity(k);
    for c in centers.chunks_exact(d) {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..n {
            if blocked[i] {
                continue;
            }
            let dist = sq_dist(m.row(i), c);
            if dist < best.1 || best.0 == usize::MAX {
                best = (i, dist);
            }
        }
        blocked[best.0] = true;
        picked.push(best.0);
    }
    Ok(picked)
}
