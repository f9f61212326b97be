//! `gen`, `select` and `eval`. Every command validates its inputs fully
//! before creating the output directory or writing any file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lbal_core::classifiers::{knn_predict, probe_predict, probe_train, TrainSchedule};
use lbal_core::kmeans::KMeansParams;
use lbal_core::metrics::{format_table, histogram_csv, mean_per_class_accuracy, top1_accuracy, MeanStd, MetricsReport};
use lbal_core::store::{
    l2_normalize, load_embeddings, load_labels, load_selection, save_embeddings, save_labels, save_selection,
};
use lbal_core::strategies::{
    select_coreset, select_kmeans_multi, select_kmeans_single, select_max_entropy, select_random, select_uniform,
    select_uniform_kmeans,
};
use lbal_core::synth::{make_blob_test_set, make_blobs, make_longtail, BlobSpec};
use lbal_core::{BudgetSchedule, EmbeddingMatrix, LabelVector, SelectionResult, Strategy, StrategyConfig};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{EvalArgs, GenArgs, InitialPool, MetricKind, ProbeArgs, SelectArgs};
use crate::{CliError, CliResult};

/// Seeds used by `select` when neither `--seeds` nor `--seed` is given.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

fn usage(e: lbal_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Failed(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

/// Writes `train.emb`, `train.lbl`, `test.emb` and `test.lbl` into `out_dir`.
pub fn gen(args: &GenArgs, seed: u64, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let class_counts = if args.longtail {
        make_longtail(args.classes, args.max, args.min, args.exponent).map_err(usage)?
    } else {
        vec![args.per_class; args.classes]
    };
    let spec = BlobSpec {
        class_counts,
        dim: args.dim,
        center_scale: args.scale,
        sigma: args.sigma,
        seed,
        fixed_centers: None,
    };
    spec.validate().map_err(usage)?;
    if args.test_per_class == 0 {
        return Err(CliError::Usage("--test-per-class must be positive".into()));
    }
    let (train, train_labels) = make_blobs(&spec)?;
    let (test, test_labels) = make_blob_test_set(&spec, args.test_per_class)?;

    create_dir(out_dir)?;
    let paths: Vec<PathBuf> = ["train.emb", "train.lbl", "test.emb", "test.lbl"]
        .iter()
        .map(|f| out_dir.join(f))
        .collect();
    save_embeddings(&train, &paths[0])?;
    save_labels(&train_labels, &paths[1])?;
    save_embeddings(&test, &paths[2])?;
    save_labels(&test_labels, &paths[3])?;
    info!("wrote {} train and {} test rows to {}", train.n(), test.n(), out_dir.display());
    Ok(paths)
}

/// Probe schedule with any command-line overrides applied.
fn probe_schedule(base: TrainSchedule, overrides: &ProbeArgs) -> CliResult<TrainSchedule> {
    let mut s = base;
    if let Some(lr) = overrides.probe_lr {
        s.lr = lr;
    }
    if let Some(epochs) = overrides.probe_epochs {
        s.epochs = epochs;
        s.milestones.retain(|&m| m < epochs);
    }
    if let Some(b) = overrides.probe_batch_size {
        s.batch_size = b;
    }
    if let Some(wd) = overrides.probe_weight_decay {
        s.weight_decay = wd;
    }
    s.validate().map_err(usage)?;
    Ok(s)
}

fn has_overrides(p: &ProbeArgs) -> bool {
    p.probe_lr.is_some() || p.probe_epochs.is_some() || p.probe_batch_size.is_some() || p.probe_weight_decay.is_some()
}

/// One fully validated (strategy, parameters) job; seeds are applied later.
#[derive(Debug, Clone)]
enum Job {
    Random(BudgetSchedule),
    Uniform { per_class: usize, capped: bool },
    KmeansSingle(usize),
    KmeansMulti(BudgetSchedule),
    Iterative { strategy: Strategy, schedule: BudgetSchedule, initial_size: usize },
    UniformKmeans { classes: usize, per_cluster: usize },
}

struct SelectPlan {
    pool: EmbeddingMatrix,
    labels: Option<LabelVector>,
    jobs: Vec<(Strategy, Job)>,
    seeds: Vec<u64>,
    base: StrategyConfig,
    initial: InitialPool,
}

fn plan_select(args: &SelectArgs, seed: Option<u64>) -> CliResult<SelectPlan> {
    let mut strategies: Vec<Strategy> = Vec::new();
    for name in &args.strategy {
        let s: Strategy = name.parse().map_err(usage)?;
        if !strategies.contains(&s) {
            strategies.push(s);
        }
    }
    if strategies.is_empty() {
        return Err(CliError::Usage("no strategy given".into()));
    }
    if args.labels.is_none() {
        if let Some(s) = strategies.iter().find(|s| s.needs_labels()) {
            return Err(CliError::Usage(format!("strategy {s} needs --labels")));
        }
    }
    let schedule = match (&args.budget, &args.schedule) {
        (Some(b), None) => Some(BudgetSchedule::single(*b).map_err(usage)?),
        (None, Some(s)) => Some(s.parse::<BudgetSchedule>().map_err(usage)?),
        _ => None,
    };
    if args.max_iter == 0 || !(args.tol >= 0.0) {
        return Err(CliError::Usage("--max-iter must be positive and --tol non-negative".into()));
    }

    let pool = load_embeddings(&args.embeddings)?;
    let labels = match &args.labels {
        Some(p) => {
            let l = load_labels(p)?;
            if l.len() != pool.n() {
                return Err(CliError::Usage(format!(
                    "{} labels for {} embedding rows",
                    l.len(),
                    pool.n()
                )));
            }
            Some(l)
        }
        None => None,
    };
    let n = pool.n();

    let need_schedule = |s: Strategy| {
        schedule
            .clone()
            .ok_or_else(|| CliError::Usage(format!("strategy {s} needs --budget or --schedule")))
    };
    let check_pool = |budget: usize| {
        if budget > n {
            Err(CliError::Usage(format!("budget {budget} exceeds pool size {n}")))
        } else {
            Ok(())
        }
    };

    let mut jobs = Vec::new();
    for &s in &strategies {
        let job = match s {
            Strategy::Random => Job::Random(need_schedule(s)?),
            Strategy::Uniform | Strategy::UniformCapped => {
                let classes = labels.as_ref().expect("checked above").num_classes();
                let per_class = match (args.per_class, &schedule) {
                    (Some(p), _) => p,
                    (None, Some(sch)) => sch.total() / classes,
                    (None, None) => return Err(CliError::Usage(format!("strategy {s} needs --per-class or --budget"))),
                };
                if per_class == 0 {
                    return Err(CliError::Usage(format!("strategy {s}: budget is below one example per class")));
                }
                Job::Uniform {
                    per_class,
                    capped: s == Strategy::UniformCapped,
                }
            }
            Strategy::KmeansSingle => {
                let sch = need_schedule(s)?;
                if sch.rounds() > 1 {
                    return Err(CliError::Usage(
                        "kmeans_single takes a single --budget; use kmeans_multi for a schedule".into(),
                    ));
                }
                Job::KmeansSingle(sch.total())
            }
            Strategy::KmeansMulti => Job::KmeansMulti(need_schedule(s)?),
            Strategy::Coreset | Strategy::MaxEntropy => {
                let sch = need_schedule(s)?;
                let first = sch.cumulative()[0];
                let initial_size = args.initial_size.unwrap_or(first);
                if initial_size == 0 || initial_size > first {
                    return Err(CliError::Usage(format!(
                        "--initial-size must be between 1 and the first budget {first}"
                    )));
                }
                Job::Iterative {
                    strategy: s,
                    schedule: sch,
                    initial_size,
                }
            }
            Strategy::UniformKmeans => {
                let classes = args
                    .classes
                    .or_else(|| labels.as_ref().map(LabelVector::num_classes))
                    .ok_or_else(|| CliError::Usage("uniform_kmeans needs --classes or --labels".into()))?;
                if classes == 0 {
                    return Err(CliError::Usage("--classes must be positive".into()));
                }
                let per_cluster = match (args.per_class, &schedule) {
                    (Some(p), _) => p,
                    (None, Some(sch)) => sch.total() / classes,
                    (None, None) => {
                        return Err(CliError::Usage("uniform_kmeans needs --per-class or --budget".into()))
                    }
                };
                if per_cluster == 0 {
                    return Err(CliError::Usage("uniform_kmeans: budget is below one example per cluster".into()));
                }
                check_pool(classes * per_cluster)?;
                Job::UniformKmeans { classes, per_cluster }
            }
        };
        if let Job::Random(sch) | Job::KmeansMulti(sch) | Job::Iterative { schedule: sch, .. } = &job {
            check_pool(sch.total())?;
        }
        if let Job::KmeansSingle(b) = job {
            check_pool(b)?;
        }
        jobs.push((s, job));
    }

    let seeds = if !args.seeds.is_empty() {
        args.seeds.clone()
    } else if let Some(s) = seed {
        vec![s]
    } else {
        DEFAULT_SEEDS.to_vec()
    };

    let probe = if has_overrides(&args.probe) {
        let batch = TrainSchedule::batch_size_for_pool(args.initial_size.unwrap_or(0).max(1));
        Some(probe_schedule(TrainSchedule::max_entropy(batch), &args.probe)?)
    } else {
        None
    };
    let base = StrategyConfig {
        seed: 0,
        normalize_features: args.l2_normalize,
        recluster_unlabeled_only: args.recluster_unlabeled_only,
        kmeans: KMeansParams {
            max_iter: args.max_iter,
            tol: args.tol,
            local_trials: None,
        },
        probe,
    };
    Ok(SelectPlan {
        pool,
        labels,
        jobs,
        seeds,
        base,
        initial: args.initial,
    })
}

fn run_job(plan: &SelectPlan, job: &Job, seed: u64) -> lbal_core::Result<SelectionResult> {
    let cfg = StrategyConfig {
        seed,
        ..plan.base.clone()
    };
    let m = &plan.pool;
    match job {
        Job::Random(sch) => select_random(m.n(), sch, seed),
        Job::Uniform { per_class, capped } => {
            select_uniform(plan.labels.as_ref().expect("validated"), *per_class, seed, *capped)
        }
        Job::KmeansSingle(b) => select_kmeans_single(m, *b, &cfg),
        Job::KmeansMulti(sch) => select_kmeans_multi(m, sch, &cfg),
        Job::Iterative {
            strategy,
            schedule,
            initial_size,
        } => {
            let initial = match plan.initial {
                InitialPool::Random => select_random(m.n(), &BudgetSchedule::single(*initial_size)?, seed)?,
                InitialPool::Kmeans => select_kmeans_single(m, *initial_size, &cfg)?,
            };
            if *strategy == Strategy::Coreset {
                select_coreset(m, schedule, &initial, &cfg)
            } else {
                select_max_entropy(m, schedule, &initial, plan.labels.as_ref().expect("validated"), &cfg)
            }
        }
        Job::UniformKmeans { classes, per_cluster } => select_uniform_kmeans(m, *classes, *per_cluster, &cfg),
    }
}

pub fn selection_file_name(strategy: &str, seed: u64) -> String {
    format!("{strategy}_seed{seed}.sel.json")
}

/// Runs every (strategy, seed) cell and writes one selection file per cell.
pub fn select(args: &SelectArgs, seed: Option<u64>, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let plan = plan_select(args, seed)?;
    let cells: Vec<(Strategy, &Job, u64)> = plan
        .jobs
        .iter()
        .flat_map(|(s, job)| plan.seeds.iter().map(move |&seed| (*s, job, seed)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(s, job, seed)| {
            run_job(&plan, job, seed).map_err(|e| CliError::Failed(format!("{s} (seed {seed}): {e}")))
        })
        .collect::<CliResult<Vec<_>>>()?;

    create_dir(out_dir)?;
    let mut paths = Vec::with_capacity(results.len());
    for sel in &results {
        let path = out_dir.join(selection_file_name(&sel.strategy, sel.seed));
        save_selection(sel, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Aggregated value of one metric for a (strategy, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub budget: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metrics: Vec<String>,
    pub summary: Vec<SummaryRow>,
    pub cells: Vec<MetricsReport>,
}

fn metric_name(m: MetricKind) -> &'static str {
    match m {
        MetricKind::Coverage => "coverage",
        MetricKind::Histogram => "histogram",
        MetricKind::Linear => "linear",
        MetricKind::Knn => "knn",
    }
}

fn collect_selection_paths(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::Failed(format!("cannot list {}: {e}", p.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".sel.json")))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no selection files found".into()));
    }
    Ok(out)
}

struct EvalData {
    train: EmbeddingMatrix,
    probe_features: EmbeddingMatrix,
    train_labels: LabelVector,
    test: Option<(EmbeddingMatrix, EmbeddingMatrix, LabelVector)>,
}

fn eval_cell(
    data: &EvalData,
    args: &EvalArgs,
    sel: &SelectionResult,
    round: usize,
) -> lbal_core::Result<MetricsReport> {
    let idx = sel.prefix(round);
    let budget = sel.round_boundaries[round];
    let mut report = MetricsReport::for_selection(&sel.strategy, budget, sel.seed, idx, &data.train_labels);
    let labels = data.train_labels.select(idx)?;
    if let Some((test, test_probe, test_labels)) = &data.test {
        let truth = test_labels.as_slice();
        let classes = test_labels.num_classes().max(data.train_labels.num_classes());
        if args.metrics.contains(&MetricKind::Linear) {
            let base = TrainSchedule::linear_probe(TrainSchedule::batch_size_for_pool(idx.len()));
            let schedule = probe_schedule(base, &args.probe).map_err(|e| lbal_core::Error::Argument(e.to_string()))?;
            let model = probe_train(&data.probe_features.select_rows(idx)?, &labels, &schedule, sel.seed)?;
            let pred = probe_predict(&model, test_probe)?;
            report.linear_top1 = Some(top1_accuracy(&pred, truth)?);
            report.linear_mean_per_class = Some(mean_per_class_accuracy(&pred, truth, classes)?);
        }
        if args.metrics.contains(&MetricKind::Knn) {
            let pred = knn_predict(&data.train.select_rows(idx)?, &labels, test)?;
            report.knn_top1 = Some(top1_accuracy(&pred, truth)?);
            report.knn_mean_per_class = Some(mean_per_class_accuracy(&pred, truth, classes)?);
        }
    }
    Ok(report)
}

/// Scores every round prefix of every selection, aggregates mean±std over
/// seeds and writes `report.json`, `report.txt` and (with the histogram
/// metric) `histogram.csv`.
pub fn eval(args: &EvalArgs, out_dir: &Path) -> CliResult<EvalReport> {
    let mut metrics = args.metrics.clone();
    metrics.sort_unstable();
    metrics.dedup();
    let needs_test = metrics.iter().any(|m| matches!(m, MetricKind::Linear | MetricKind::Knn));
    if needs_test && (args.test_embeddings.is_none() || args.test_labels.is_none()) {
        return Err(CliError::Usage(
            "linear and knn metrics need --test-embeddings and --test-labels".into(),
        ));
    }
    if metrics.contains(&MetricKind::Linear) {
        probe_schedule(TrainSchedule::linear_probe(4), &args.probe)?;
    }
    let paths = collect_selection_paths(&args.selections)?;

    let train = load_embeddings(&args.train_embeddings)?;
    let train_labels = load_labels(&args.train_labels)?;
    if train_labels.len() != train.n() {
        return Err(CliError::Usage(format!(
            "{} train labels for {} train rows",
            train_labels.len(),
            train.n()
        )));
    }
    let test = if needs_test {
        let t = load_embeddings(args.test_embeddings.as_ref().expect("checked"))?;
        let l = load_labels(args.test_labels.as_ref().expect("checked"))?;
        if l.len() != t.n() || t.d() != train.d() {
            return Err(CliError::Usage(format!(
                "test set is {}x{} with {} labels; train dimension is {}",
                t.n(),
                t.d(),
                l.len(),
                train.d()
            )));
        }
        let probe_view = if args.l2_normalize { l2_normalize(&t) } else { t.clone() };
        Some((t, probe_view, l))
    } else {
        None
    };
    let mut selections = Vec::with_capacity(paths.len());
    for p in &paths {
        let sel = load_selection(p)?;
        sel.validate(train.n())
            .map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
        selections.push(sel);
    }

    let probe_features = if args.l2_normalize { l2_normalize(&train) } else { train.clone() };
    let data = EvalData {
        train,
        probe_features,
        train_labels,
        test,
    };
    let cells: Vec<(&SelectionResult, usize)> = selections
        .iter()
        .flat_map(|s| (0..s.round_boundaries.len()).map(move |t| (s, t)))
        .collect();
    let reports = cells
        .par_iter()
        .map(|&(sel, t)| {
            eval_cell(&data, args, sel, t)
                .map_err(|e| CliError::Failed(format!("{} seed {} round {t}: {e}", sel.strategy, sel.seed)))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let report = summarize(&metrics, reports);
    let text = render_tables(&report);
    create_dir(out_dir)?;
    let json = serde_json::to_string_pretty(&report).map_err(lbal_core::Error::from)? + "\n";
    write_text(&out_dir.join("report.json"), &json)?;
    write_text(&out_dir.join("report.txt"), &text)?;
    if metrics.contains(&MetricKind::Histogram) {
        write_text(&out_dir.join("histogram.csv"), &histogram_csv(&report.cells))?;
    }
    Ok(report)
}

/// Per-cell values of every reported metric, keyed by metric name.
fn metric_values(metrics: &[MetricKind], r: &MetricsReport) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    for m in metrics {
        match m {
            MetricKind::Coverage => out.push(("coverage_percent", r.coverage_percent)),
            MetricKind::Histogram => {
                out.push(("zero_occurrence_classes", r.occurrence_histogram.get(&0).copied().unwrap_or(0) as f64))
            }
            MetricKind::Linear => {
                out.extend(r.linear_top1.map(|v| ("linear_top1", v)));
                out.extend(r.linear_mean_per_class.map(|v| ("linear_mean_per_class", v)));
            }
            MetricKind::Knn => {
                out.extend(r.knn_top1.map(|v| ("knn_top1", v)));
                out.extend(r.knn_mean_per_class.map(|v| ("knn_mean_per_class", v)));
            }
        }
    }
    out
}

type Grid = BTreeMap<(String, usize), Vec<f64>>;

fn grids(metrics: &[MetricKind], cells: &[MetricsReport]) -> Vec<(&'static str, Grid)> {
    let mut by_metric: Vec<(&'static str, Grid)> = Vec::new();
    for r in cells {
        for (name, v) in metric_values(metrics, r) {
            let pos = match by_metric.iter().position(|(n, _)| *n == name) {
                Some(p) => p,
                None => {
                    by_metric.push((name, Grid::new()));
                    by_metric.len() - 1
                }
            };
            by_metric[pos].1.entry((r.strategy.clone(), r.budget)).or_default().push(v);
        }
    }
    by_metric
}

pub fn summarize(metrics: &[MetricKind], cells: Vec<MetricsReport>) -> EvalReport {
    let mut summary = Vec::new();
    for (name, grid) in grids(metrics, &cells) {
        for ((strategy, budget), values) in grid {
            let ms = MeanStd::of(&values);
            summary.push(SummaryRow {
                strategy,
                budget,
                metric: name.to_string(),
                mean: ms.mean,
                std: ms.std,
                runs: ms.runs,
            });
        }
    }
    EvalReport {
        metrics: metrics.iter().map(|&m| metric_name(m).to_string()).collect(),
        summary,
        cells,
    }
}

/// One strategy-by-budget table per metric, cells formatted as `mean±std`.
pub fn render_tables(report: &EvalReport) -> String {
    let metrics: Vec<MetricKind> = report
        .metrics
        .iter()
        .filter_map(|n| <MetricKind as clap::ValueEnum>::from_str(n, true).ok())
        .collect();
    let mut out = String::new();
    for (name, grid) in grids(&metrics, &report.cells) {
        out.push_str(&format_table(name, &grid));
        out.push('\n');
    }
    out
}
