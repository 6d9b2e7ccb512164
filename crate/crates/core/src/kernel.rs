//! S-space map, marker set and the Student-t similarity kernel.
//!
//! A pair of latent vectors `(z_i, z_j)` is represented in S-space by
//! `s = |z_i - z_j|`. Every marker `mu_m` is scored with the one-degree-of-freedom
//! Student-t kernel `(1 + ||s - mu_m||^2)^-1`, normalized over all markers. The
//! positive share `q+` is the probability that the pair is similar.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairKind;
use crate::error::{Result, SmellError};
use crate::kmeans::{kmeans, KMeansParams};
use crate::nn::{Autoencoder, Parameters};
use crate::scalar::Scalar;

/// Point in S-space; every coordinate is non-negative.
pub type SimilarityVector<T> = Array1<T>;

/// Element-wise absolute difference of two latent vectors.
pub fn sspace_map<T: Scalar>(z_i: ArrayView1<'_, T>, z_j: ArrayView1<'_, T>) -> Result<SimilarityVector<T>> {
    if z_i.len() != z_j.len() {
        return Err(SmellError::DimensionMismatch {
            expected: z_i.len(),
            actual: z_j.len(),
        });
    }
    Ok(Array1::from_iter(z_i.iter().zip(z_j.iter()).map(|(&a, &b)| (a - b).abs())))
}

/// Positive (similarity) and negative (dissimilarity) markers, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet<T> {
    pub positive: Array2<T>,
    pub negative: Array2<T>,
}

impl<T: Scalar> MarkerSet<T> {
    pub fn new(positive: Array2<T>, negative: Array2<T>) -> Result<Self> {
        if positive.nrows() == 0 || negative.nrows() == 0 {
            return Err(SmellError::InvalidConfig(
                "marker set needs at least one positive and one negative marker".into(),
            ));
        }
        if positive.ncols() != negative.ncols() {
            return Err(SmellError::DimensionMismatch {
                expected: positive.ncols(),
                actual: negative.ncols(),
            });
        }
        Ok(Self { positive, negative })
    }

    pub fn zeros(k: usize, negatives: usize, dim: usize) -> Self {
        Self {
            positive: Array2::zeros((k, dim)),
            negative: Array2::zeros((negatives, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.positive.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.positive.nrows()
    }

    pub fn n_negative(&self) -> usize {
        self.negative.nrows()
    }

    pub fn len(&self) -> usize {
        self.n_positive() + self.n_negative()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Marker `m` in kernel order: positives first, then negatives.
    pub fn marker(&self, m: usize) -> ArrayView1<'_, T> {
        if m < self.n_positive() {
            self.positive.row(m)
        } else {
            self.negative.row(m - self.n_positive())
        }
    }

    pub fn group(&self, m: usize) -> PairKind {
        if m < self.n_positive() {
            PairKind::Similar
        } else {
            PairKind::Dissimilar
        }
    }

    /// True when two markers are bit-identical.
    pub fn has_duplicates(&self) -> bool {
        (0..self.len()).any(|a| (a + 1..self.len()).any(|b| self.marker(a) == self.marker(b)))
    }
}

impl<T: Scalar> Parameters<T> for MarkerSet<T> {
    fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        vec![self.positive.view().into_dyn(), self.negative.view().into_dyn()]
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        vec![self.positive.view_mut().into_dyn(), self.negative.view_mut().into_dyn()]
    }
}

/// Kernel output for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScore<T> {
    pub q_plus: T,
    pub q_minus: T,
    /// Normalized per-marker shares in kernel order (positives first).
    pub per_marker: Vec<T>,
}

/// Unnormalized kernel values `(1 + ||s - mu_m||^2)^-1` in kernel order.
pub fn kernel_values<T: Scalar>(s: ArrayView1<'_, T>, markers: &MarkerSet<T>) -> Vec<T> {
    (0..markers.len())
        .map(|m| {
            let d2: T = s
                .iter()
                .zip(markers.marker(m).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            T::one() / (T::one() + d2)
        })
        .collect()
}

pub fn student_t_scores<T: Scalar>(s: ArrayView1<'_, T>, markers: &MarkerSet<T>) -> Result<PairScore<T>> {
    if markers.is_empty() {
        return Err(SmellError::InvalidConfig("empty marker set".into()));
    }
    if s.len() != markers.dim() {
        return Err(SmellError::DimensionMismatch {
            expected: markers.dim(),
            actual: s.len(),
        });
    }
    Ok(scores_from_kernel(kernel_values(s, markers), markers.n_positive()))
}

pub(crate) fn scores_from_kernel<T: Scalar>(kernel: Vec<T>, n_positive: usize) -> PairScore<T> {
    let total: T = kernel.iter().copied().sum();
    let per_marker: Vec<T> = kernel.into_iter().map(|a| a / total).collect();
    let q_plus = per_marker[..n_positive].iter().copied().sum();
    let q_minus = per_marker[n_positive..].iter().copied().sum();
    PairScore {
        q_plus,
        q_minus,
        per_marker,
    }
}

/// Dissimilarity between two latent vectors: `q-` of their S-space point.
pub fn latent_dissimilarity<T: Scalar>(z_i: ArrayView1<'_, T>, z_j: ArrayView1<'_, T>, markers: &MarkerSet<T>) -> T {
    let kernel: Vec<T> = (0..markers.len())
        .map(|m| {
            let d2: T = z_i
                .iter()
                .zip(z_j.iter())
                .zip(markers.marker(m).iter())
                .map(|((&a, &b), &mu)| {
                    let d = (a - b).abs() - mu;
                    d * d
                })
                .sum();
            T::one() / (T::one() + d2)
        })
        .collect();
    let total: T = kernel.iter().copied().sum();
    kernel[markers.n_positive()..].iter().copied().sum::<T>() / total
}

/// KNN-ready dissimilarity in `[0, 1]`: `q-` of the encoded pair, 0 meaning most similar.
pub fn distance_for_knn<T: Scalar>(
    x_i: ArrayView1<'_, T>,
    x_j: ArrayView1<'_, T>,
    params: &Autoencoder<T>,
    markers: &MarkerSet<T>,
) -> Result<T> {
    let z_i = params.encode(x_i.insert_axis(Axis(0)))?;
    let z_j = params.encode(x_j.insert_axis(Axis(0)))?;
    let s = sspace_map(z_i.row(0), z_j.row(0))?;
    Ok(student_t_scores(s.view(), markers)?.q_minus)
}

/// Lloyd centroids of similar-pair S-vectors (positives) and dissimilar-pair S-vectors
/// (negatives).
pub fn marker_init<T: Scalar>(
    similar: ArrayView2<'_, T>,
    dissimilar: ArrayView2<'_, T>,
    k: usize,
    negatives: usize,
    params: &KMeansParams,
    seed: u64,
) -> Result<MarkerSet<T>> {
    if similar.ncols() != dissimilar.ncols() {
        return Err(SmellError::DimensionMismatch {
            expected: similar.ncols(),
            actual: dissimilar.ncols(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = kmeans(similar, k, params, &mut rng)?;
    let negative = kmeans(dissimilar, negatives, params, &mut rng)?;
    let markers = MarkerSet::new(positive, negative)?;
    if markers.has_duplicates() {
        return Err(SmellError::MarkerInit("two markers initialized to the same point".into()));
    }
    Ok(markers)
}

/// Marker export record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerRecord {
    pub group: String,
    pub coords: Vec<f64>,
}

impl<T: Scalar> MarkerSet<T> {
    pub fn to_records(&self) -> Vec<MarkerRecord> {
        (0..self.len())
            .map(|m| MarkerRecord {
                group: self.group(m).symbol().to_string(),
                coords: self.marker(m).iter().map(|v| v.as_f64()).collect(),
            })
            .collect()
    }

    pub fn from_records(records: &[MarkerRecord]) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.coords.len());
        let collect = |group: &str| -> Result<Array2<T>> {
            let rows: Vec<&MarkerRecord> = records.iter().filter(|r| r.group == group).collect();
            let mut out = Array2::zeros((rows.len(), dim));
            for (i, r) in rows.iter().enumerate() {
                if r.coords.len() != dim {
                    return Err(SmellError::DimensionMismatch {
                        expected: dim,
                        actual: r.coords.len(),
                    });
                }
                out.row_mut(i).assign(&Array1::from_iter(r.coords.iter().map(|&v| T::of(v))));
            }
            Ok(out)
        };
        if let Some(bad) = records.iter().find(|r| r.group != "+" && r.group != "-") {
            return Err(SmellError::Checkpoint(format!("unknown marker group '{}'", bad.group)));
        }
        Self::new(collect("+")?, collect("-")?)
    }
}
