//! KNN evaluation, cross-validation, ablations and cross-dataset aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{downsample, make_folds, minmax_normalize, Dataset, NUM_FOLDS};
use crate::error::{Result, SmellError};
use crate::kernel::{latent_dissimilarity, MarkerSet};
use crate::scalar::Scalar;
use crate::trainer::{train, TrainConfig};

/// Neighbours consulted by the classifier.
pub const KNN_NEIGHBORS: usize = 3;

/// Dissimilarity used by the KNN classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `q-` of the S-space point of the two latent vectors.
    Smell,
    /// Euclidean distance between latent vectors of the trained encoder.
    SmellEuclidean,
    /// Euclidean distance between input rows, no training.
    RawEuclidean,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Smell, MetricKind::SmellEuclidean, MetricKind::RawEuclidean];

    pub fn needs_training(self) -> bool {
        self != MetricKind::RawEuclidean
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Smell => "smell",
            Self::SmellEuclidean => "smell_euclidean",
            Self::RawEuclidean => "raw_euclidean",
        })
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "smell" => Ok(Self::Smell),
            "smell_euclidean" => Ok(Self::SmellEuclidean),
            "raw_euclidean" | "euclidean" => Ok(Self::RawEuclidean),
            other => Err(format!(
                "unknown method '{other}' (smell, smell_euclidean, raw_euclidean)"
            )),
        }
    }
}

pub trait PairDistance<T> {
    fn distance(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl<T: Scalar> PairDistance<T> for Euclidean {
    fn distance(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        a.iter()
            .zip(b.iter())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            .sqrt()
    }
}

/// Learned dissimilarity over latent vectors.
#[derive(Debug, Clone, Copy)]
pub struct SmellDistance<'a, T> {
    pub markers: &'a MarkerSet<T>,
}

impl<T: Scalar> PairDistance<T> for SmellDistance<'_, T> {
    fn distance(&self, a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
        latent_dissimilarity(a, b, self.markers)
    }
}

/// Majority label among the `k` nearest training rows. Equal distances are ordered by
/// row index; vote ties go to the label with the smallest summed neighbour distance,
/// then to the lowest label.
pub fn knn_classify<T: Scalar, D: PairDistance<T> + ?Sized>(
    train_rows: ArrayView2<'_, T>,
    train_labels: &[usize],
    query: ArrayView1<'_, T>,
    metric: &D,
    k: usize,
) -> usize {
    let k = k.min(train_rows.nrows()).max(1);
    // (distance, row), kept sorted ascending
    let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
    for (r, row) in train_rows.rows().into_iter().enumerate() {
        let d = metric.distance(query, row);
        if best.len() == k && !(d < best[k - 1].0) {
            continue;
        }
        let at = best.partition_point(|&(bd, br)| bd < d || (bd == d && br < r));
        best.insert(at, (d, r));
        best.truncate(k);
    }
    vote(best.iter().map(|&(d, r)| (d, train_labels[r])))
}

pub(crate) fn vote<T: Scalar>(neighbours: impl Iterator<Item = (T, usize)>) -> usize {
    let mut tally: BTreeMap<usize, (usize, T)> = BTreeMap::new();
    for (d, label) in neighbours {
        let entry = tally.entry(label).or_insert((0, T::zero()));
        entry.0 += 1;
        entry.1 += d;
    }
    let mut winner: Option<(usize, usize, T)> = None;
    // ascending label order: strict comparisons keep the lowest label on full ties
    for (label, (count, dist)) in tally {
        let better = match winner {
            None => true,
            Some((_, c, d)) => count > c || (count == c && dist < d),
        };
        if better {
            winner = Some((label, count, dist));
        }
    }
    winner.map_or(0, |w| w.0)
}

/// Accuracy and `truth × prediction` confusion counts of one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl FoldResult {
    fn from_predictions(fold: usize, n_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut confusion = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t - 1][p - 1] += 1;
        }
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let accuracy = if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 };
        Self {
            fold,
            accuracy,
            confusion,
        }
    }
}

/// Per-fold results of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodFolds {
    pub metric: MetricKind,
    pub folds: Vec<FoldResult>,
}

impl MethodFolds {
    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.folds.iter().map(|f| f.accuracy).collect::<Vec<_>>())
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Downsampling (when configured) followed by min-max normalization of the full dataset.
pub fn prepare_dataset<T: Scalar>(raw: &Dataset<T>, config: &TrainConfig) -> Result<Dataset<T>> {
    let sampled = downsample(raw, config.downsample, config.seed)?;
    Ok(minmax_normalize(&sampled))
}

fn classify_all<T: Scalar, D: PairDistance<T> + ?Sized>(
    space: &Array2<T>,
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    metric: &D,
) -> Vec<usize> {
    let train_space = space.select(Axis(0), train);
    let train_labels: Vec<usize> = train.iter().map(|&r| labels[r]).collect();
    test.iter()
        .map(|&r| knn_classify(train_space.view(), &train_labels, space.row(r), metric, KNN_NEIGHBORS))
        .collect()
}

fn evaluate_fold<T: Scalar>(
    dataset: &Dataset<T>,
    plan: &crate::data::FoldPlan,
    fold: usize,
    config: &TrainConfig,
    metrics: &[MetricKind],
) -> Result<Vec<FoldResult>> {
    let test = plan.test_rows(fold);
    let train_rows = plan.train_rows(Some(fold));
    let truth: Vec<usize> = test.iter().map(|&r| dataset.labels[r]).collect();
    let model = if metrics.iter().any(|m| m.needs_training()) {
        let fold_config = config.with_seed(config.seed.wrapping_add(fold as u64));
        Some(train(dataset, plan, Some(fold), &fold_config)?)
    } else {
        None
    };
    let latents = match &model {
        Some(m) => Some(m.encode(dataset.features.view())?),
        None => None,
    };
    let mut out = Vec::with_capacity(metrics.len());
    for &metric in metrics {
        let predicted = match metric {
            MetricKind::RawEuclidean => classify_all(&dataset.features, &dataset.labels, &train_rows, &test, &Euclidean),
            MetricKind::SmellEuclidean => {
                classify_all(latents.as_ref().expect("trained"), &dataset.labels, &train_rows, &test, &Euclidean)
            }
            MetricKind::Smell => {
                let model = model.as_ref().expect("trained");
                let distance = SmellDistance { markers: &model.markers };
                classify_all(latents.as_ref().expect("trained"), &dataset.labels, &train_rows, &test, &distance)
            }
        };
        out.push(FoldResult::from_predictions(fold, dataset.n_classes(), &truth, &predicted));
    }
    Ok(out)
}

/// 10-fold cross-validation of every requested metric. Training-based metrics share one
/// model per fold, trained with seed `config.seed + fold`.
pub fn cross_validate<T: Scalar>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    metrics: &[MetricKind],
) -> Result<Vec<MethodFolds>> {
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    let plan = make_folds(dataset, config.seed);
    let per_fold: Vec<Vec<FoldResult>> = (0..NUM_FOLDS)
        .into_par_iter()
        .map(|fold| {
            evaluate_fold(dataset, &plan, fold, config, metrics).map_err(|e| match e {
                SmellError::NonFinite { what, step } => SmellError::NonFinite {
                    what: format!("{what} (fold {fold})"),
                    step,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    Ok(metrics
        .iter()
        .enumerate()
        .map(|(m, &metric)| MethodFolds {
            metric,
            folds: per_fold.iter().map(|f| f[m].clone()).collect(),
        })
        .collect())
}

/// One ablation variant: a configuration snapshot plus the metric it is scored with.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: &'static str,
    pub config: TrainConfig,
    pub metric: MetricKind,
}

pub fn ablation_variants(base: &TrainConfig) -> Vec<AblationVariant> {
    let full = TrainConfig {
        zero_r_r: false,
        zero_r_d: false,
        euclidean_eval: false,
        ..base.clone()
    };
    vec![
        AblationVariant { name: "full", config: full.clone(), metric: MetricKind::Smell },
        AblationVariant { name: "r_r=0", config: TrainConfig { zero_r_r: true, ..full.clone() }, metric: MetricKind::Smell },
        AblationVariant { name: "r_d=0", config: TrainConfig { zero_r_d: true, ..full.clone() }, metric: MetricKind::Smell },
        AblationVariant {
            name: "r_r=r_d=0",
            config: TrainConfig { zero_r_r: true, zero_r_d: true, ..full.clone() },
            metric: MetricKind::Smell,
        },
        AblationVariant {
            name: "euclidean",
            config: TrainConfig { euclidean_eval: true, ..full },
            metric: MetricKind::SmellEuclidean,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub variant: AblationVariant,
    pub folds: Vec<FoldResult>,
}

/// Cross-validates the five ablation variants with a shared seed. The full and
/// Euclidean variants train identically, so they share one set of models.
pub fn run_ablations<T: Scalar>(dataset: &Dataset<T>, base: &TrainConfig) -> Result<Vec<AblationResult>> {
    let variants = ablation_variants(base);
    let shared = cross_validate(dataset, &variants[0].config, &[MetricKind::Smell, MetricKind::SmellEuclidean])?;
    let mut results = Vec::with_capacity(variants.len());
    for variant in variants {
        let folds = match variant.name {
            "full" => shared[0].folds.clone(),
            "euclidean" => shared[1].folds.clone(),
            _ => cross_validate(dataset, &variant.config, &[variant.metric])?.remove(0).folds,
        };
        results.push(AblationResult { variant, folds });
    }
    Ok(results)
}

/// Cross-dataset aggregates of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub accuracy_avg: f64,
    pub ranking_avg: f64,
    pub diff_avg: f64,
    pub firsts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub datasets: Vec<String>,
    pub methods: Vec<MethodSummary>,
}

/// Aggregates mean accuracies given as `(dataset, method, accuracy)`. Ranks are 1 for
/// the best accuracy with ties sharing the minimum rank; `firsts` counts every method
/// tied for the best accuracy. Datasets and methods keep their first-appearance order.
pub fn aggregate(entries: &[(String, String, f64)]) -> Result<BenchmarkSummary> {
    let mut datasets: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for (d, m, _) in entries {
        if !datasets.contains(d) {
            datasets.push(d.clone());
        }
        if !methods.contains(m) {
            methods.push(m.clone());
        }
    }
    let mut table = vec![vec![None; methods.len()]; datasets.len()];
    for (d, m, acc) in entries {
        let di = datasets.iter().position(|x| x == d).expect("dataset listed");
        let mi = methods.iter().position(|x| x == m).expect("method listed");
        if table[di][mi].replace(*acc).is_some() {
            return Err(SmellError::Ragged(format!("duplicate entry for ({d}, {m})")));
        }
    }
    let mut acc = vec![vec![0.0; methods.len()]; datasets.len()];
    for (di, row) in table.iter().enumerate() {
        for (mi, cell) in row.iter().enumerate() {
            acc[di][mi] = cell.ok_or_else(|| {
                SmellError::Ragged(format!("method '{}' missing on dataset '{}'", methods[mi], datasets[di]))
            })?;
        }
    }
    let n_data = datasets.len() as f64;
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(mi, method)| {
            let mut accuracy_sum = 0.0;
            let mut rank_sum = 0.0;
            let mut diff_sum = 0.0;
            let mut firsts = 0;
            for row in &acc {
                let mine = row[mi];
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let rank = 1 + row.iter().filter(|&&other| other > mine).count();
                accuracy_sum += mine;
                rank_sum += rank as f64;
                diff_sum += best - mine;
                firsts += usize::from(mine == best);
            }
            MethodSummary {
                method: method.clone(),
                accuracy_avg: accuracy_sum / n_data,
                ranking_avg: rank_sum / n_data,
                diff_avg: diff_sum / n_data,
                firsts,
            }
        })
        .collect();
    Ok(BenchmarkSummary {
        datasets,
        methods: summaries,
    })
}
