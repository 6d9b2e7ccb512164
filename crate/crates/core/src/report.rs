//! CSV tables of per-fold accuracies and their aggregates.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Result, SmellError};
use crate::eval::{aggregate, mean_std, BenchmarkSummary, MethodFolds, MethodSummary};

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub fold: usize,
    pub accuracy: f64,
}

/// One line of `dataset_summary.csv`: mean and population std over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummaryRow {
    pub dataset: String,
    pub method: String,
    pub mean: f64,
    pub std: f64,
}

pub fn result_rows(dataset: &str, methods: &[(String, &MethodFolds)]) -> Vec<ResultRow> {
    methods
        .iter()
        .flat_map(|(name, folds)| {
            folds.folds.iter().map(move |f| ResultRow {
                dataset: dataset.to_string(),
                method: name.clone(),
                fold: f.fold,
                accuracy: f.accuracy,
            })
        })
        .collect()
}

/// Per-(dataset, method) fold statistics in first-appearance order.
pub fn dataset_summaries(rows: &[ResultRow]) -> Vec<DatasetSummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(dataset, method)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.method == method)
                .map(|r| r.accuracy)
                .collect();
            let (mean, std) = mean_std(&acc);
            DatasetSummaryRow {
                dataset,
                method,
                mean,
                std,
            }
        })
        .collect()
}

/// Cross-dataset aggregates computed from per-fold rows.
pub fn summarize(rows: &[ResultRow]) -> Result<BenchmarkSummary> {
    let entries: Vec<(String, String, f64)> = dataset_summaries(rows)
        .into_iter()
        .map(|s| (s.dataset, s.method, s.mean))
        .collect();
    aggregate(&entries)
}

fn csv_error(path: &Path, e: csv::Error) -> SmellError {
    SmellError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_csv<S: Serialize>(path: impl AsRef<Path>, rows: &[S]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|source| SmellError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<S: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<S>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| csv_error(path, e))
}

/// Writes `results.csv`, `dataset_summary.csv` and `summary.csv` into `dir`.
pub fn write_reports(dir: impl AsRef<Path>, rows: &[ResultRow]) -> Result<BenchmarkSummary> {
    let dir = dir.as_ref();
    let summary = summarize(rows)?;
    write_csv(dir.join("results.csv"), rows)?;
    write_csv(dir.join("dataset_summary.csv"), &dataset_summaries(rows))?;
    write_csv::<MethodSummary>(dir.join("summary.csv"), &summary.methods)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: &str, m: &str, fold: usize, accuracy: f64) -> ResultRow {
        ResultRow {
            dataset: d.into(),
            method: m.into(),
            fold,
            accuracy,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let rows = vec![row("iris", "smell", 0, 0.1 + 0.2), row("iris", "smell", 1, 14.0 / 15.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<ResultRow>(&path).unwrap(), rows);
    }

    #[test]
    fn summaries_follow_folds() {
        let rows = vec![
            row("a", "x", 0, 1.0),
            row("a", "x", 1, 0.5),
            row("a", "y", 0, 0.5),
            row("a", "y", 1, 0.5),
        ];
        let s = dataset_summaries(&rows);
        assert_eq!(s[0].mean, 0.75);
        assert_eq!(s[0].std, 0.25);
        let b = summarize(&rows).unwrap();
        assert_eq!(b.methods[0].firsts, 1);
        assert_eq!(b.methods[1].ranking_avg, 2.0);
    }

    #[test]
    fn writes_three_tables() {
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &[row("a", "x", 0, 1.0)]).unwrap();
        for f in ["results.csv", "dataset_summary.csv", "summary.csv"] {
            assert!(dir.path().join(f).exists());
        }
        let text = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(text.starts_with("method,accuracy_avg,ranking_avg,diff_avg,firsts"));
    }
}
