//! Bundled benchmark datasets and seeded synthetic generators.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::data::{parse_csv, CsvOptions, Dataset};
use crate::error::Result;
use crate::scalar::Scalar;

const IRIS_CSV: &str = include_str!("../data/iris.csv");

/// Fisher's Iris: 150 rows, 4 features, 3 classes (raw, not normalized).
pub fn iris<T: Scalar>() -> Dataset<T> {
    let opts = CsvOptions {
        has_header: true,
        ..CsvOptions::default()
    };
    parse_csv("iris", IRIS_CSV, &opts).expect("bundled iris parses")
}

/// MONK's problem 2 over its full attribute space: 432 rows, 6 integer attributes,
/// positive exactly when two attributes take their first value.
pub fn monk2<T: Scalar>() -> Dataset<T> {
    const ARITY: [usize; 6] = [3, 3, 2, 3, 4, 2];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut current = [1usize; 6];
    loop {
        let ones = current.iter().filter(|&&v| v == 1).count();
        labels.push(if ones == 2 { 2 } else { 1 });
        rows.extend(current.iter().map(|&v| T::of(v as f64)));
        // odometer over the attribute values
        let mut pos = 6;
        loop {
            if pos == 0 {
                let features = Array2::from_shape_vec((labels.len(), 6), rows).expect("shape");
                return Dataset::new("monk2", features, labels, vec!["0".into(), "1".into()])
                    .expect("monk2 is valid");
            }
            pos -= 1;
            if current[pos] < ARITY[pos] {
                current[pos] += 1;
                break;
            }
            current[pos] = 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Two separable isotropic Gaussians in 2-D.
    TwoGaussians,
    /// Class 1 split between two clusters on either side of class 2.
    DisjointRegions,
    /// Class 2 on a ring around a class-1 disk.
    RingVsDisk,
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "two-gaussians" => Ok(Self::TwoGaussians),
            "disjoint-regions" => Ok(Self::DisjointRegions),
            "ring-vs-disk" => Ok(Self::RingVsDisk),
            other => Err(format!(
                "unknown synthetic kind '{other}' (two-gaussians, disjoint-regions, ring-vs-disk)"
            )),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TwoGaussians => "two-gaussians",
            Self::DisjointRegions => "disjoint-regions",
            Self::RingVsDisk => "ring-vs-disk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub rows: usize,
    /// Distance between cluster centres in units of the cluster standard deviation.
    pub separation: f64,
    /// Extra uniform-noise feature columns appended to the informative ones.
    pub noise_dims: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            rows: 300,
            separation: 10.0,
            noise_dims: 0,
            seed: 0,
        }
    }
}

/// Generates a labelled dataset. Rows are grouped by class; classes are balanced
/// (`rows / 2` each, the remainder going to class 1).
pub fn synthesize<T: Scalar>(kind: SynthKind, params: &SynthParams) -> Result<Dataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Uniform::new(0.0, 1.0).expect("unit interval");
    let n2 = params.rows / 2;
    let n1 = params.rows - n2;
    let sep = params.separation;
    let width = 2 + params.noise_dims;
    let mut features = Array2::zeros((params.rows, width));
    let mut labels = Vec::with_capacity(params.rows);
    for r in 0..params.rows {
        let class = if r < n1 { 1 } else { 2 };
        let (x, y) = match kind {
            SynthKind::TwoGaussians => {
                let cx = if class == 1 { 0.0 } else { sep };
                (cx + unit.sample(&mut rng), unit.sample(&mut rng))
            }
            SynthKind::DisjointRegions => {
                // class 1 alternates between the two flanking clusters
                let cx = if class == 2 {
                    0.0
                } else if r % 2 == 0 {
                    -sep
                } else {
                    sep
                };
                (cx + unit.sample(&mut rng), unit.sample(&mut rng))
            }
            SynthKind::RingVsDisk => {
                let angle = std::f64::consts::TAU * noise.sample(&mut rng);
                let radius = if class == 1 {
                    sep * 0.5 * noise.sample(&mut rng).sqrt()
                } else {
                    sep + unit.sample(&mut rng)
                };
                (radius * angle.cos(), radius * angle.sin())
            }
        };
        features[[r, 0]] = T::of(x);
        features[[r, 1]] = T::of(y);
        for c in 2..width {
            features[[r, c]] = T::of(noise.sample(&mut rng));
        }
        labels.push(class);
    }
    Dataset::new(kind.to_string(), features, labels, vec!["A".into(), "B".into()])
}
