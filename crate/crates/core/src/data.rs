//! Tabular dataset ingestion, normalization, stratified folds and pair sampling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmellError};
use crate::scalar::Scalar;

/// Number of cross-validation folds.
pub const NUM_FOLDS: usize = 10;

/// Labelled feature matrix. Labels are contiguous in `1..=n_classes()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub name: String,
    pub features: Array2<T>,
    pub labels: Vec<usize>,
    /// Original label text, indexed by `label - 1`.
    pub class_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset and checks the class-count invariants.
    pub fn new(
        name: impl Into<String>,
        features: Array2<T>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let dataset = Self {
            name: name.into(),
            features,
            labels,
            class_names,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.labels.len() {
            return Err(SmellError::InvalidDataset(format!(
                "{} feature rows but {} labels",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(SmellError::InvalidDataset("non-finite feature value".into()));
        }
        let b = self.class_names.len();
        if b < 2 {
            return Err(SmellError::InvalidDataset(
                "single-class dataset: at least 2 classes are required".into(),
            ));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l == 0 || l > b) {
            return Err(SmellError::InvalidDataset(format!(
                "label {bad} outside 1..={b}"
            )));
        }
        for (idx, count) in self.class_counts().iter().enumerate() {
            if *count < 2 {
                return Err(SmellError::InvalidDataset(format!(
                    "class with fewer than 2 members: '{}' has {count}",
                    self.class_names[idx]
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, T> {
        self.features.row(i)
    }

    /// Members per class, indexed by `label - 1`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            if (1..=counts.len()).contains(&l) {
                counts[l - 1] += 1;
            }
        }
        counts
    }

    /// Rows of each class in ascending index order, indexed by `label - 1`.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l - 1].push(i);
        }
        groups
    }

    /// Copies the given rows, keeping labels and class names as-is.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Converts the feature matrix to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            name: self.name.clone(),
            features: self.features.mapv(|v| U::of(v.as_f64())),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "last" => Ok(Self::Last),
            other => other
                .parse::<usize>()
                .map(Self::Index)
                .map_err(|_| format!("label column must be 'last' or a column index, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_col: LabelColumn,
}

/// Reads a comma-separated dataset from disk. The dataset name is the file stem.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| SmellError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&name, &text, options).map_err(|e| match e {
        SmellError::Csv { message, .. } => SmellError::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Serializes a dataset as CSV with an `x0,..,class` header, the class name last.
/// Reading it back with a header and the last label column restores the dataset.
pub fn to_csv_string<T: Scalar>(dataset: &Dataset<T>) -> String {
    let mut out: Vec<String> = (0..dataset.n_features()).map(|c| format!("x{c}")).collect();
    out.push("class".into());
    let mut text = out.join(",") + "\n";
    for (r, row) in dataset.features.rows().into_iter().enumerate() {
        for v in row {
            text.push_str(&v.as_f64().to_string());
            text.push(',');
        }
        text.push_str(&dataset.class_names[dataset.labels[r] - 1]);
        text.push('\n');
    }
    text
}

/// Parses CSV text. Labels are re-encoded to `1..=b` in sorted order (numeric order
/// when every label parses as a number).
pub fn parse_csv<T: Scalar>(name: &str, text: &str, options: &CsvOptions) -> Result<Dataset<T>> {
    let csv_err = |message: String| SmellError::Csv {
        path: name.into(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut raw_features: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cols = record.len();
        if cols < 2 {
            return Err(csv_err(format!("row {line} has fewer than 2 columns")));
        }
        let label_idx = match options.label_col {
            LabelColumn::Last => cols - 1,
            LabelColumn::Index(i) if i < cols => i,
            LabelColumn::Index(i) => {
                return Err(csv_err(format!("label column {i} out of range ({cols} columns)")))
            }
        };
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(csv_err(format!("row {line} has {cols} columns, expected {w}")))
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(cell.to_string());
            } else {
                let value: f64 = cell.parse().map_err(|_| {
                    csv_err(format!("non-numeric feature cell '{cell}' at row {line}, column {c}"))
                })?;
                if !value.is_finite() {
                    return Err(csv_err(format!("non-finite feature at row {line}, column {c}")));
                }
                raw_features.push(value);
            }
        }
    }
    let width = width.ok_or_else(|| csv_err("no data rows".into()))?;
    let rows = raw_labels.len();
    let features = Array2::from_shape_vec((rows, width - 1), raw_features)
        .map_err(|e| csv_err(e.to_string()))?
        .mapv(T::of);

    let (labels, class_names) = encode_labels(&raw_labels);
    Dataset::new(name, features, labels, class_names)
}

fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut distinct: Vec<String> = raw.to_vec();
    distinct.sort();
    distinct.dedup();
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(distinct).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        distinct = paired.into_iter().map(|(_, s)| s).collect();
    }
    let index: BTreeMap<&str, usize> = distinct
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i + 1))
        .collect();
    let labels = raw.iter().map(|s| index[s.as_str()]).collect();
    (labels, distinct)
}

/// Per-column min-max scaling to `[0, 1]`. Constant columns map to 0.
pub fn minmax_normalize<T: Scalar>(dataset: &Dataset<T>) -> Dataset<T> {
    let mut out = dataset.clone();
    for mut column in out.features.axis_iter_mut(Axis(1)) {
        let (lo, hi) = column.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        if span > T::zero() {
            column.mapv_inplace(|v| (v - lo) / span);
        } else {
            column.fill(T::zero());
        }
    }
    out
}

/// Stratified random subset keeping `round(fraction * n_c)` rows of every class, in
/// original row order.
pub fn downsample<T: Scalar>(dataset: &Dataset<T>, fraction: f64, seed: u64) -> Result<Dataset<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SmellError::InvalidConfig(format!(
            "downsampling fraction must be in (0, 1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok(dataset.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (c, mut rows) in dataset.rows_by_class().into_iter().enumerate() {
        let target = (fraction * rows.len() as f64).round() as usize;
        if target < 2 {
            return Err(SmellError::InvalidConfig(format!(
                "fraction {fraction} too small: class '{}' would keep {target} rows (need >= 2)",
                dataset.class_names[c]
            )));
        }
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..target]);
    }
    keep.sort_unstable();
    Ok(dataset.select_rows(&keep))
}

/// Assignment of every row to one of [`NUM_FOLDS`] folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_of_row: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&i| self.fold_of_row[i] == fold)
            .collect()
    }

    /// Rows outside `test_fold`; every row when `test_fold` is `None`.
    pub fn train_rows(&self, test_fold: Option<usize>) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&i| Some(self.fold_of_row[i]) != test_fold)
            .collect()
    }
}

/// Stratified 10-fold plan: rows of each class are shuffled and dealt round-robin, the
/// dealer position carrying over between classes so fold sizes stay balanced too.
pub fn make_folds<T: Scalar>(dataset: &Dataset<T>, seed: u64) -> FoldPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_row = vec![0; dataset.n_rows()];
    let mut dealer = 0;
    for mut rows in dataset.rows_by_class() {
        rows.shuffle(&mut rng);
        for row in rows {
            fold_of_row[row] = dealer % NUM_FOLDS;
            dealer += 1;
        }
    }
    FoldPlan { fold_of_row, seed }
}

/// Whether a pair shares a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairKind {
    Similar,
    Dissimilar,
}

impl PairKind {
    /// One-hot target `(u+, u-)`.
    pub fn one_hot(self) -> (f64, f64) {
        match self {
            PairKind::Similar => (1.0, 0.0),
            PairKind::Dissimilar => (0.0, 1.0),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PairKind::Similar => "+",
            PairKind::Dissimilar => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub kind: PairKind,
}

/// A mini-batch of pairs: similar pairs first, then dissimilar ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<Pair>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn left(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.i).collect()
    }

    pub fn right(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.j).collect()
    }

    pub fn kinds(&self) -> Vec<PairKind> {
        self.pairs.iter().map(|p| p.kind).collect()
    }
}

/// Uniform sampler (with replacement) over ordered similar and dissimilar pairs of a
/// fixed row subset.
#[derive(Debug, Clone)]
pub struct PairSampler {
    groups: Vec<Vec<usize>>,
    /// Rows outside each group, aligned with `groups`.
    complements: Vec<Vec<usize>>,
    similar_weights: Option<WeightedIndex<f64>>,
    dissimilar_weights: Option<WeightedIndex<f64>>,
}

impl PairSampler {
    pub fn new(labels: &[usize], rows: &[usize]) -> Self {
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &r in rows {
            by_label.entry(labels[r]).or_default().push(r);
        }
        let groups: Vec<Vec<usize>> = by_label.into_values().collect();
        let total = rows.len();
        let complements = groups
            .iter()
            .map(|g| {
                let own = labels[g[0]];
                rows.iter().copied().filter(|&r| labels[r] != own).collect()
            })
            .collect();
        // Ordered pair counts per anchor class.
        let similar: Vec<f64> = groups
            .iter()
            .map(|g| (g.len() * g.len().saturating_sub(1)) as f64)
            .collect();
        let dissimilar: Vec<f64> = groups
            .iter()
            .map(|g| (g.len() * (total - g.len())) as f64)
            .collect();
        Self {
            groups,
            complements,
            similar_weights: WeightedIndex::new(&similar).ok(),
            dissimilar_weights: WeightedIndex::new(&dissimilar).ok(),
        }
    }

    pub fn sample_similar<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pair> {
        let weights = self.similar_weights.as_ref().ok_or_else(|| {
            SmellError::PairSampling("no class has two training members".into())
        })?;
        let group = &self.groups[weights.sample(rng)];
        let a = rng.random_range(0..group.len());
        let mut b = rng.random_range(0..group.len() - 1);
        if b >= a {
            b += 1;
        }
        Ok(Pair {
            i: group[a],
            j: group[b],
            kind: PairKind::Similar,
        })
    }

    pub fn sample_dissimilar<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pair> {
        let weights = self.dissimilar_weights.as_ref().ok_or_else(|| {
            SmellError::PairSampling("training rows contain a single class".into())
        })?;
        let g = weights.sample(rng);
        let group = &self.groups[g];
        let others = &self.complements[g];
        Ok(Pair {
            i: group[rng.random_range(0..group.len())],
            j: others[rng.random_range(0..others.len())],
            kind: PairKind::Dissimilar,
        })
    }

    /// `ceil(g/2)` similar pairs followed by `floor(g/2)` dissimilar pairs.
    pub fn sample_batch<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> Result<PairBatch> {
        let n_similar = g.div_ceil(2);
        let mut pairs = Vec::with_capacity(g);
        for _ in 0..n_similar {
            pairs.push(self.sample_similar(rng)?);
        }
        for _ in n_similar..g {
            pairs.push(self.sample_dissimilar(rng)?);
        }
        Ok(PairBatch { pairs })
    }
}

/// Samples one batch of `g` pairs from the rows outside `test_fold`.
pub fn sample_pair_batch<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    plan: &FoldPlan,
    test_fold: Option<usize>,
    g: usize,
    rng: &mut R,
) -> Result<PairBatch> {
    PairSampler::new(&dataset.labels, &plan.train_rows(test_fold)).sample_batch(g, rng)
}
