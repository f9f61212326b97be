//! Classifiers over frozen features: a multinomial logistic-regression probe
//! trained with Adam, and exact cosine 1-nearest-neighbour.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, shuffle_prefix};
use crate::store::{EmbeddingMatrix, LabelVector, NormStats};

/// Adam with step-decayed learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub lr: f64,
    /// Epochs (0-based) at which the learning rate is multiplied by 0.1.
    pub milestones: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl TrainSchedule {
    fn adam(lr: f64, batch_size: usize) -> Self {
        Self {
            lr,
            milestones: vec![50, 75],
            epochs: 100,
            batch_size,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Linear evaluation: lr 0.01, decayed at epochs 50 and 75, 100 epochs.
    pub fn linear_probe(batch_size: usize) -> Self {
        Self::adam(0.01, batch_size)
    }

    /// Probe used inside max-entropy selection: lr 0.001, same decay.
    pub fn max_entropy(batch_size: usize) -> Self {
        Self::adam(0.001, batch_size)
    }

    /// Batch size 4 for labeled pools of at most 100 examples, else 128.
    pub fn batch_size_for_pool(n: usize) -> usize {
        if n <= 100 {
            4
        } else {
            128
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * 0.1f64.powi(drops as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("epochs and batch_size must be positive".into()));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1])
            || self.milestones.iter().any(|&m| m >= self.epochs)
        {
            return Err(Error::Argument(format!(
                "milestones {:?} must be strictly increasing and below {} epochs",
                self.milestones, self.epochs
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Argument("lr must be > 0 and weight_decay >= 0".into()));
        }
        Ok(())
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}

/// Shannon entropy in nats; zero probabilities contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `softmax(W x + b)` with `W` stored as `C x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmax {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Summed cross-entropy, number of argmax hits, and summed gradients
    /// over a batch of rows `xs` (`len = batch * dim`).
    fn accumulate(&self, xs: &[f64], ys: &[u32], gw: &mut [f64], gb: &mut [f64]) -> (f64, usize) {
        let mut p = vec![0.0; self.classes];
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, &y) in xs.chunks_exact(self.dim).zip(ys) {
            self.logits_into(x, &mut p);
            if argmax(&p) == y as usize {
                correct += 1;
            }
            softmax_in_place(&mut p);
            loss -= p[y as usize].ln();
            p[y as usize] -= 1.0;
            for (c, &delta) in p.iter().enumerate() {
                gb[c] += delta;
                for (g, &xv) in gw[c * self.dim..(c + 1) * self.dim].iter_mut().zip(x) {
                    *g += delta * xv;
                }
            }
        }
        (loss, correct)
    }

    /// Mean cross-entropy `-ln softmax(Wx+b)[y]` over the batch and its
    /// gradients with respect to `W` and `b`.
    pub fn loss_grad(&self, xs: &[f64], ys: &[u32]) -> (f64, Vec<f64>, Vec<f64>) {
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let (loss, _) = self.accumulate(xs, ys, &mut gw, &mut gb);
        let scale = 1.0 / ys.len() as f64;
        gw.iter_mut().for_each(|g| *g *= scale);
        gb.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, gw, gb)
    }

    pub fn loss(&self, xs: &[f64], ys: &[u32]) -> f64 {
        self.loss_grad(xs, ys).0
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch, measured before each batch update.
    pub loss: f64,
    pub accuracy: f64,
}

/// Trained linear probe, JSON-serializable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub num_classes: usize,
    pub dim: usize,
    /// `C` rows of `d` weights.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub norm_stats: NormStats,
    pub schedule: TrainSchedule,
    pub seed: u64,
    pub train_log: Vec<EpochLog>,
}

impl ProbeModel {
    pub fn linear(&self) -> LinearSoftmax {
        LinearSoftmax {
            classes: self.num_classes,
            dim: self.dim,
            weights: self.weights.concat(),
            bias: self.bias.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: i32, s: &TrainSchedule) {
        let bc1 = 1.0 - s.beta1.powi(t);
        let bc2 = 1.0 - s.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = s.beta1 * *m + (1.0 - s.beta1) * g;
            *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + s.eps);
        }
    }
}

fn standardized_rows(features: &EmbeddingMatrix, stats: &NormStats) -> Vec<f64> {
    let d = features.d();
    let mut out = vec![0.0; features.n() * d];
    out.par_chunks_exact_mut(d)
        .enumerate()
        .for_each(|(i, o)| stats.apply_row(features.row(i), o));
    out
}

/// Trains a zero-initialized probe on standardized features with mini-batch
/// Adam. Batches follow a fresh seeded shuffle each epoch; the final partial
/// batch is kept.
pub fn probe_train(
    features: &EmbeddingMatrix,
    labels: &LabelVector,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<ProbeModel> {
    schedule.validate()?;
    if features.n() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} labels",
            features.n(),
            labels.len()
        )));
    }
    let classes = labels.num_classes();
    if classes < 2 {
        return Err(Error::Argument(format!("probe needs at least 2 classes, got {classes}")));
    }
    let (n, d) = (features.n(), features.d());
    let stats = NormStats::compute(features);
    let xs = standardized_rows(features, &stats);
    let ys = labels.as_slice();

    let mut model = LinearSoftmax::zeros(classes, d);
    let mut adam_w = Adam::new(model.weights.len());
    let mut adam_b = Adam::new(classes);
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Vec::with_capacity(schedule.batch_size * d);
    let mut batch_y = Vec::with_capacity(schedule.batch_size);
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = vec![0.0; classes];
    let mut step = 0i32;
    let mut log = Vec::with_capacity(schedule.epochs);

    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        shuffle_prefix(&mut order, n, &mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0;
        for chunk in order.chunks(schedule.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(&xs[i * d..(i + 1) * d]);
                batch_y.push(ys[i]);
            }
            gw.iter_mut().for_each(|g| *g = 0.0);
            gb.iter_mut().for_each(|g| *g = 0.0);
            let (loss, correct) = model.accumulate(&batch_x, &batch_y, &mut gw, &mut gb);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss;
            epoch_correct += correct;
            let scale = 1.0 / chunk.len() as f64;
            for (g, w) in gw.iter_mut().zip(&model.weights) {
                *g = *g * scale + schedule.weight_decay * w;
            }
            gb.iter_mut().for_each(|g| *g *= scale);
            step += 1;
            adam_w.step(&mut model.weights, &gw, lr, step, schedule);
            adam_b.step(&mut model.bias, &gb, lr, step, schedule);
        }
        if model.weights.iter().chain(&model.bias).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        log.push(EpochLog {
            epoch,
            lr,
            loss: epoch_loss / n as f64,
            accuracy: 100.0 * epoch_correct as f64 / n as f64,
        });
    }

    Ok(ProbeModel {
        num_classes: classes,
        dim: d,
        weights: model.weights.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        bias: model.bias,
        norm_stats: stats,
        schedule: schedule.clone(),
        seed,
        train_log: log,
    })
}

/// Class probabilities per row, using the model's stored normalization.
pub fn probe_predict_proba(model: &ProbeModel, features: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    if features.d() != model.dim || model.norm_stats.dim() != model.dim {
        return Err(Error::Data(format!(
            "features have dimension {}, model expects {}",
            features.d(),
            model.dim
        )));
    }
    let linear = model.linear();
    Ok((0..features.n())
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; model.dim];
            model.norm_stats.apply_row(features.row(i), &mut x);
            let mut p = vec![0.0; model.num_classes];
            linear.logits_into(&x, &mut p);
            softmax_in_place(&mut p);
            p
        })
        .collect())
}

/// Most probable class per row (lowest class on ties).
pub fn probe_predict(model: &ProbeModel, features: &EmbeddingMatrix) -> Result<Vec<u32>> {
    Ok(probe_predict_proba(model, features)?
        .iter()
        .map(|p| argmax(p) as u32)
        .collect())
}

fn unit_rows(m: &EmbeddingMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.n() * m.d());
    for row in m.rows() {
        let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        out.extend(row.iter().map(|&v| v as f64 * inv));
    }
    out
}

/// Exact 1-nearest-neighbour by cosine similarity. Zero vectors have
/// similarity 0 to everything; ties go to the lowest training index.
pub fn knn_predict(
    train: &EmbeddingMatrix,
    train_labels: &LabelVector,
    query: &EmbeddingMatrix,
) -> Result<Vec<u32>> {
    if train.n() != train_labels.len() {
        return Err(Error::Data(format!(
            "{} training rows but {} labels",
            train.n(),
            train_labels.len()
        )));
    }
    if train.d() != query.d() {
        return Err(Error::Data(format!(
            "training dimension {} differs from query dimension {}",
            train.d(),
            query.d()
        )));
    }
    let d = train.d();
    let train_unit = unit_rows(train);
    let query_unit = unit_rows(query);
    Ok(query_unit
        .par_chunks_exact(d)
        .map(|q| {
            let mut best = (0usize, f64::NEG_INFINITY);
            for (j, t) in train_unit.chunks_exact(d).enumerate() {
                let sim: f64 = q.iter().zip(t).map(|(a, b)| a * b).sum();
                if sim > best.1 {
                    best = (j, sim);
                }
            }
            train_labels.get(best.0)
        })
        .collect())
}
