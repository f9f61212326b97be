//! Coverage, occurrence histograms and accuracy measures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::LabelVector;

/// Selected examples per class (length `C`).
pub fn per_class_counts(indices: &[usize], labels: &LabelVector) -> Vec<usize> {
    let mut counts = vec![0; labels.num_classes()];
    for &i in indices {
        counts[labels.get(i) as usize] += 1;
    }
    counts
}

/// Percentage of the declared classes with at least one selected example.
pub fn category_coverage(indices: &[usize], labels: &LabelVector) -> f64 {
    let counts = per_class_counts(indices, labels);
    let covered = counts.iter().filter(|&&c| c > 0).count();
    100.0 * covered as f64 / counts.len() as f64
}

/// Occurrence count -> number of classes selected exactly that many times.
/// Every count from 0 up to the maximum is present, possibly with value 0.
pub fn occurrence_histogram(indices: &[usize], labels: &LabelVector) -> BTreeMap<usize, usize> {
    let counts = per_class_counts(indices, labels);
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist: BTreeMap<usize, usize> = (0..=max).map(|m| (m, 0)).collect();
    for c in counts {
        *hist.entry(c).or_default() += 1;
    }
    hist
}

fn check_lengths(predicted: &[u32], truth: &[u32]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} ground-truth labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("no labels to score".into()));
    }
    Ok(())
}

pub fn top1_accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class accuracies over classes present in `truth`.
pub fn mean_per_class_accuracy(predicted: &[u32], truth: &[u32], num_classes: usize) -> Result<f64> {
    check_lengths(predicted, truth)?;
    let mut total = vec![0usize; num_classes];
    let mut hits = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        let t = t as usize;
        if t >= num_classes {
            return Err(Error::Data(format!("label {t} outside {num_classes} classes")));
        }
        total[t] += 1;
        if p as usize == t {
            hits[t] += 1;
        }
    }
    let (sum, present) = total
        .iter()
        .zip(&hits)
        .filter(|(t, _)| **t > 0)
        .fold((0.0, 0usize), |(s, c), (&t, &h)| (s + h as f64 / t as f64, c + 1));
    Ok(100.0 * sum / present as f64)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl MeanStd {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            runs: samples.len(),
        }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.1}±{:.1}", self.mean, self.std)
    }
}

/// Metrics of one (strategy, budget, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub strategy: String,
    pub budget: usize,
    pub seed: u64,
    pub coverage_percent: f64,
    pub per_class_counts: Vec<usize>,
    pub occurrence_histogram: BTreeMap<usize, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_top1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_mean_per_class: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_top1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_mean_per_class: Option<f64>,
}

impl MetricsReport {
    /// Coverage and histogram for a selection; accuracies are filled in by
    /// the caller.
    pub fn for_selection(
        strategy: &str,
        budget: usize,
        seed: u64,
        indices: &[usize],
        labels: &LabelVector,
    ) -> Self {
        let per_class_counts = per_class_counts(indices, labels);
        Self {
            strategy: strategy.to_string(),
            budget,
            seed,
            coverage_percent: category_coverage(indices, labels),
            occurrence_histogram: occurrence_histogram(indices, labels),
            per_class_counts,
            linear_top1: None,
            linear_mean_per_class: None,
            knn_top1: None,
            knn_mean_per_class: None,
        }
    }
}

/// Strategy-by-budget grid of `mean±std` cells, one table per metric.
///
/// `cells` maps `(strategy, budget)` to the per-seed values of one metric.
pub fn format_table(title: &str, cells: &BTreeMap<(String, usize), Vec<f64>>) -> String {
    let mut budgets: Vec<usize> = cells.keys().map(|k| k.1).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut strategies: Vec<&str> = cells.keys().map(|k| k.0.as_str()).collect();
    strategies.dedup();
    let width = strategies.iter().map(|s| s.len()).max().unwrap_or(0).max(title.len());

    let mut out = String::new();
    let _ = write!(out, "{title:<width$}");
    for b in &budgets {
        let _ = write!(out, " | {b:>11}");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(width + budgets.len() * 14));
    for s in strategies {
        let _ = write!(out, "{s:<width$}");
        for &b in &budgets {
            match cells.get(&(s.to_string(), b)) {
                Some(v) if !v.is_empty() => {
                    let _ = write!(out, " | {:>11}", MeanStd::of(v).to_string());
                }
                _ => {
                    let _ = write!(out, " | {:>11}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// `strategy,budget,seed,occurrences,classes` rows.
pub fn histogram_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("strategy,budget,seed,occurrences,classes\n");
    for r in reports {
        for (m, c) in &r.occurrence_histogram {
            let _ = writeln!(out, "{},{},{},{m},{c}", r.strategy, r.budget, r.seed);
        }
    }
    out
}
