//! Lloyd's k-means with k-means++ seeding.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Result, SmellError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-6,
        }
    }
}

fn sq_dist<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn distinct_rows<T: Scalar>(points: &ArrayView2<'_, T>) -> usize {
    points
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.as_f64().to_bits()).collect::<Vec<_>>())
        .collect::<HashSet<_>>()
        .len()
}

fn nearest<T: Scalar>(point: ArrayView1<'_, T>, centroids: &Array2<T>) -> (usize, T) {
    centroids
        .rows()
        .into_iter()
        .enumerate()
        .map(|(c, centroid)| (c, sq_dist(point, centroid)))
        .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus<T: Scalar, R: Rng + ?Sized>(points: &ArrayView2<'_, T>, k: usize, rng: &mut R) -> Array2<T> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut closest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, centroids.row(0)).as_f64())
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&closest) {
            Ok(weights) => weights.sample(rng),
            // every point sits on a centroid already
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            closest[i] = closest[i].min(sq_dist(p, centroids.row(c)).as_f64());
        }
    }
    centroids
}

/// Returns `k` centroids (one per row).
pub fn kmeans<T: Scalar, R: Rng + ?Sized>(
    points: ArrayView2<'_, T>,
    k: usize,
    params: &KMeansParams,
    rng: &mut R,
) -> Result<Array2<T>> {
    if k == 0 {
        return Err(SmellError::MarkerInit("k must be >= 1".into()));
    }
    let distinct = distinct_rows(&points);
    if distinct < k {
        return Err(SmellError::MarkerInit(format!(
            "{distinct} distinct vectors cannot seed {k} centroids"
        )));
    }
    let mut centroids = plus_plus(&points, k, rng);
    let mut assignment = vec![0; points.nrows()];
    for _ in 0..params.max_iter {
        for (i, p) in points.rows().into_iter().enumerate() {
            assignment[i] = nearest(p, &centroids).0;
        }
        let mut sums = Array2::<T>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            let mut row = sums.row_mut(assignment[i]);
            row += &p;
            counts[assignment[i]] += 1;
        }
        let mut updated = centroids.clone();
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean: Array1<T> = &sums.row(c) / T::of(count as f64);
                updated.row_mut(c).assign(&mean);
            } else {
                // empty cluster: move it onto the point worst served by its centroid
                let far = points
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, updated.row(assignment[i]))))
                    .fold((0, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best })
                    .0;
                updated.row_mut(c).assign(&points.row(far));
                assignment[far] = c;
            }
        }
        let shift = updated
            .axis_iter(Axis(0))
            .zip(centroids.axis_iter(Axis(0)))
            .map(|(a, b)| sq_dist(a, b).sqrt().as_f64())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift <= params.tol {
            break;
        }
    }
    Ok(centroids)
}
