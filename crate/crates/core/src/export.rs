//! Plot-ready exports: latent vectors, sampled S-space vectors with an optional PCA
//! projection, and marker coordinates.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Pair, PairSampler};
use crate::error::{Result, SmellError};
use crate::kernel::{sspace_map, MarkerSet};
use crate::nn::Autoencoder;
use crate::scalar::Scalar;

/// Pairs of each kind written to the S-space export.
pub const PAIRS_PER_KIND: usize = 200;

/// Principal axes of a point cloud, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// One unit-norm component per row.
    pub components: Array2<f64>,
    pub variances: Array1<f64>,
}

impl Pca {
    pub fn project(&self, points: ArrayView2<'_, f64>) -> Array2<f64> {
        (&points - &self.mean).dot(&self.components.t())
    }
}

/// Eigendecomposition of the covariance of `points`. Components are ordered by
/// decreasing eigenvalue and each is signed so that its largest-magnitude loading is
/// positive.
pub fn pca(points: ArrayView2<'_, f64>, n_components: usize) -> Result<Pca> {
    let (rows, dim) = points.dim();
    if rows < 2 {
        return Err(SmellError::InvalidDataset("PCA needs at least two points".into()));
    }
    if n_components == 0 || n_components > dim {
        return Err(SmellError::InvalidConfig(format!(
            "cannot take {n_components} components of {dim}-dimensional data"
        )));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centred = &points - &mean;
    let cov = centred.t().dot(&centred) / (rows - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Array2::zeros((n_components, dim));
    let mut variances = Array1::zeros(n_components);
    for (k, &c) in order.iter().take(n_components).enumerate() {
        let v = eig.eigenvectors.column(c);
        let lead = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for d in 0..dim {
            components[[k, d]] = sign * v[d];
        }
        variances[k] = eig.eigenvalues[c];
    }
    Ok(Pca {
        mean,
        components,
        variances,
    })
}

/// Seeded sample of `per_kind` similar and `per_kind` dissimilar pairs (similar first).
pub fn sample_export_pairs<T: Scalar>(
    dataset: &Dataset<T>,
    rows: &[usize],
    per_kind: usize,
    seed: u64,
) -> Result<Vec<Pair>> {
    let sampler = PairSampler::new(&dataset.labels, rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut pairs = Vec::with_capacity(2 * per_kind);
    for _ in 0..per_kind {
        pairs.push(sampler.sample_similar(&mut rng)?);
    }
    for _ in 0..per_kind {
        pairs.push(sampler.sample_dissimilar(&mut rng)?);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub latent: PathBuf,
    pub svectors: PathBuf,
    pub markers: PathBuf,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| SmellError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn fmt_row<T: Scalar>(values: impl Iterator<Item = T>) -> String {
    values.map(|v| v.as_f64().to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `latent.csv`, `svectors.csv` and `markers.json` into `out_dir`.
pub fn export_embeddings<T: Scalar>(
    params: &Autoencoder<T>,
    markers: &MarkerSet<T>,
    dataset: &Dataset<T>,
    out_dir: impl AsRef<Path>,
    with_pca2: bool,
    seed: u64,
) -> Result<ExportPaths> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| SmellError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let z = params.encode(dataset.features.view())?;
    let n = z.ncols();

    let zcols: Vec<String> = (0..n).map(|c| format!("z{c}")).collect();
    let mut latent = format!("row,label,{}\n", zcols.join(","));
    for (r, row) in z.rows().into_iter().enumerate() {
        let label = &dataset.class_names[dataset.labels[r] - 1];
        latent.push_str(&format!("{r},{label},{}\n", fmt_row(row.iter().copied())));
    }

    let rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let pairs = sample_export_pairs(dataset, &rows, PAIRS_PER_KIND, seed)?;
    let mut s = Array2::<f64>::zeros((pairs.len(), n));
    for (p, pair) in pairs.iter().enumerate() {
        let v = sspace_map(z.row(pair.i), z.row(pair.j))?;
        s.row_mut(p).assign(&v.mapv(|x| x.as_f64()));
    }
    let projected = if with_pca2 {
        if n < 2 {
            return Err(SmellError::InvalidConfig("PCA export needs a latent dimension >= 2".into()));
        }
        Some(pca(s.view(), 2)?.project(s.view()))
    } else {
        None
    };
    let scols: Vec<String> = (0..n).map(|c| format!("s{c}")).collect();
    let mut svec = format!("i,j,kind,{}", scols.join(","));
    svec.push_str(if with_pca2 { ",pc1,pc2\n" } else { "\n" });
    for (p, pair) in pairs.iter().enumerate() {
        svec.push_str(&format!("{},{},{},{}", pair.i, pair.j, pair.kind.symbol(), fmt_row(s.row(p).iter().copied())));
        if let Some(pc) = &projected {
            svec.push_str(&format!(",{},{}", pc[[p, 0]], pc[[p, 1]]));
        }
        svec.push('\n');
    }

    let marker_json =
        serde_json::to_string_pretty(&markers.to_records()).map_err(|e| SmellError::Checkpoint(e.to_string()))?;

    let paths = ExportPaths {
        latent: out_dir.join("latent.csv"),
        svectors: out_dir.join("svectors.csv"),
        markers: out_dir.join("markers.json"),
    };
    write_file(&paths.latent, &latent)?;
    write_file(&paths.svectors, &svec)?;
    write_file(&paths.markers, &(marker_json + "\n"))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn cloud(rows: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((rows, dim), |(_, c)| normal.sample(&mut rng) * (c + 1) as f64)
    }

    #[test]
    fn components_are_orthonormal_and_sorted() {
        let x = cloud(300, 5, 1);
        let p = pca(x.view(), 5).unwrap();
        let gram = p.components.dot(&p.components.t());
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-8);
            }
        }
        assert!(p.variances.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn largest_loading_is_positive() {
        let x = cloud(100, 4, 2);
        let p = pca(x.view(), 2).unwrap();
        for row in p.components.rows() {
            let lead = row.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn full_rank_projection_preserves_distances() {
        let x = cloud(40, 2, 3);
        let y = pca(x.view(), 2).unwrap().project(x.view());
        for i in 0..40 {
            for j in 0..40 {
                let dx = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                let dy = (&y.row(i) - &y.row(j)).mapv(|v| v * v).sum().sqrt();
                assert!((dx - dy).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn principal_axis_of_a_line() {
        let x = array![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let p = pca(x.view(), 1).unwrap();
        let c = p.components.row(0);
        assert!((c[0] - 1.0 / 5f64.sqrt()).abs() < 1e-12 && (c[1] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_component_counts() {
        let x = cloud(10, 3, 4);
        assert!(pca(x.view(), 0).is_err());
        assert!(pca(x.view(), 4).is_err());
    }
}
