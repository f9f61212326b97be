//! Seeded synthetic feature pools: Gaussian blobs with balanced or
//! long-tailed class sizes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, shuffle_prefix, SeedRng};
use crate::store::{EmbeddingMatrix, LabelVector};

#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    /// Pool size of each class; its length is the class count.
    pub class_counts: Vec<usize>,
    pub dim: usize,
    /// Class centers are uniform in `[-center_scale, center_scale]^dim`.
    pub center_scale: f64,
    /// Per-coordinate standard deviation around the class center.
    pub sigma: f64,
    pub seed: u64,
    /// Explicit `C x dim` class centers; drawn from the seed when `None`.
    pub fixed_centers: Option<Vec<f64>>,
}

impl BlobSpec {
    pub fn balanced(classes: usize, per_class: usize, dim: usize, center_scale: f64, sigma: f64, seed: u64) -> Self {
        Self {
            class_counts: vec![per_class; classes],
            dim,
            center_scale,
            sigma,
            seed,
            fixed_centers: None,
        }
    }

    /// Classes of `per_class` points around the given centers (one row each).
    pub fn around(centers: &[Vec<f64>], per_class: usize, sigma: f64, seed: u64) -> Self {
        let dim = centers.first().map_or(0, Vec::len);
        let scale = centers.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            class_counts: vec![per_class; centers.len()],
            dim,
            center_scale: scale.max(f64::MIN_POSITIVE),
            sigma,
            seed,
            fixed_centers: Some(centers.concat()),
        }
    }

    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_counts.is_empty() || self.class_counts.contains(&0) {
            return Err(Error::Argument("every class needs at least one example".into()));
        }
        if self.dim == 0 {
            return Err(Error::Argument("dimension must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.center_scale > 0.0) {
            return Err(Error::Argument("sigma and center_scale must be positive".into()));
        }
        if let Some(c) = &self.fixed_centers {
            if c.len() != self.classes() * self.dim {
                return Err(Error::Argument("fixed centers do not match C x dim".into()));
            }
        }
        Ok(())
    }

    /// Class centers, `C x dim` row-major, drawn from the spec seed.
    pub fn centers(&self) -> Vec<f64> {
        if let Some(c) = &self.fixed_centers {
            return c.clone();
        }
        let mut rng = seeded(self.seed);
        (0..self.classes() * self.dim)
            .map(|_| rng.random_range(-self.center_scale..=self.center_scale))
            .collect()
    }
}

fn sample(
    spec: &BlobSpec,
    centers: &[f64],
    counts: &[usize],
    rng: &mut SeedRng,
) -> Result<(EmbeddingMatrix, LabelVector)> {
    let d = spec.dim;
    let mut rows: Vec<(u32, Vec<f32>)> = Vec::with_capacity(counts.iter().sum());
    for (c, &count) in counts.iter().enumerate() {
        let center = &centers[c * d..(c + 1) * d];
        for _ in 0..count {
            let row = center
                .iter()
                .map(|&mu| {
                    let z: f64 = rng.sample(StandardNormal);
                    (mu + spec.sigma * z) as f32
                })
                .collect();
            rows.push((c as u32, row));
        }
    }
    let len = rows.len();
    shuffle_prefix(&mut rows, len, rng);
    let labels = rows.iter().map(|r| r.0).collect();
    let data = rows.into_iter().flat_map(|r| r.1).collect();
    Ok((
        EmbeddingMatrix::from_vec(len, d, data)?,
        LabelVector::new(labels, Some(counts.len()))?,
    ))
}

/// Pool rows grouped by class, then shuffled. Labels declare all `C` classes.
pub fn make_blobs(spec: &BlobSpec) -> Result<(EmbeddingMatrix, LabelVector)> {
    spec.validate()?;
    let centers = spec.centers();
    let mut rng = seeded(derive_seed(spec.seed, 1));
    sample(spec, &centers, &spec.class_counts, &mut rng)
}

/// A held-out set around the same class centers as [`make_blobs`], with
/// `per_class` examples of every class and independent noise.
pub fn make_blob_test_set(spec: &BlobSpec, per_class: usize) -> Result<(EmbeddingMatrix, LabelVector)> {
    spec.validate()?;
    if per_class == 0 {
        return Err(Error::Argument("test set needs at least one example per class".into()));
    }
    let centers = spec.centers();
    let mut rng = seeded(derive_seed(spec.seed, 2));
    sample(spec, &centers, &vec![per_class; spec.classes()], &mut rng)
}

/// Long-tailed class sizes decaying geometrically from `max_count` to
/// `min_count`: class `c` gets `round(max * (min/max)^((c/(C-1))^exponent))`.
/// `exponent = 1` is plain geometric interpolation.
pub fn make_longtail(classes: usize, max_count: usize, min_count: usize, exponent: f64) -> Result<Vec<usize>> {
    if classes == 0 || min_count == 0 || max_count < min_count {
        return Err(Error::Argument(format!(
            "need classes >= 1 and max >= min >= 1, got C={classes}, max={max_count}, min={min_count}"
        )));
    }
    if !(exponent > 0.0) {
        return Err(Error::Argument("exponent must be positive".into()));
    }
    if classes == 1 {
        return Ok(vec![max_count]);
    }
    let ratio = min_count as f64 / max_count as f64;
    Ok((0..classes)
        .map(|c| {
            let t = (c as f64 / (classes - 1) as f64).powf(exponent);
            (max_count as f64 * ratio.powf(t)).round() as usize
        })
        .collect())
}
