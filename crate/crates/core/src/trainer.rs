//! Autoencoder pretraining, marker initialization and the joint optimization loop.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FoldPlan, PairKind, PairSampler};
use crate::error::{Result, SmellError};
use crate::kernel::{marker_init, sspace_map, MarkerSet};
use crate::kmeans::KMeansParams;
use crate::nn::{all_finite, init_params, Autoencoder, InitScheme, Sgd, DEFAULT_HIDDEN};
use crate::objective::{objective, LossConstants};
use crate::scalar::Scalar;

/// Every hyperparameter of a training run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub r_hc: f64,
    pub r_d: f64,
    pub r_r: f64,
    pub epsilon: f64,
    /// `k`, the number of similarity markers.
    pub positive_markers: usize,
    /// `w - k`, the number of dissimilarity markers.
    pub negative_markers: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Pairs per joint step (rows per pretraining step).
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub seed: u64,
    pub init: InitScheme,
    /// Pairs per group encoded for Lloyd marker initialization.
    pub marker_samples: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Stratified downsampling fraction applied before cross-validation.
    pub downsample: f64,
    pub zero_r_r: bool,
    pub zero_r_d: bool,
    pub euclidean_eval: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            r_hc: 1.0,
            r_d: 0.1,
            r_r: 1e-3,
            epsilon: 1e-3,
            positive_markers: 3,
            negative_markers: 2,
            latent_dim: 64,
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            pretrain_epochs: 200,
            joint_epochs: 500,
            seed: 0,
            init: InitScheme::default(),
            marker_samples: 2048,
            kmeans_max_iter: 50,
            kmeans_tol: 1e-6,
            downsample: 1.0,
            zero_r_r: false,
            zero_r_d: false,
            euclidean_eval: false,
        }
    }
}

impl TrainConfig {
    /// Checks the invariants; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |msg: &str| Err(SmellError::InvalidConfig(msg.into()));
        for (name, v) in [("r_hc", self.r_hc), ("r_d", self.r_d), ("r_r", self.r_r), ("momentum", self.momentum)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SmellError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.positive_markers == 0 || self.negative_markers == 0 {
            return bad("need at least one positive and one negative marker");
        }
        if self.latent_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be >= 1");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if !(self.downsample > 0.0 && self.downsample <= 1.0) {
            return bad("downsample must be in (0, 1]");
        }
        if !(self.init.weight_std >= 0.0 && self.init.bias_std >= 0.0) {
            return bad("init standard deviations must be >= 0");
        }
        let mut warnings = Vec::new();
        if self.batch_size % 2 == 1 {
            warnings.push(format!(
                "odd batch_size {}: similar pairs outnumber dissimilar ones by one",
                self.batch_size
            ));
        }
        Ok(warnings)
    }

    /// Objective constants after applying the ablation switches.
    pub fn constants<T: Scalar>(&self) -> LossConstants<T> {
        LossConstants {
            r_hc: T::of(self.r_hc),
            r_r: if self.zero_r_r { T::zero() } else { T::of(self.r_r) },
            r_d: if self.zero_r_d { T::zero() } else { T::of(self.r_d) },
            epsilon: T::of(self.epsilon),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// One row of the joint training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub h_c: f64,
    pub r_r_term: f64,
    pub r_d_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub params: Autoencoder<T>,
    pub markers: MarkerSet<T>,
    pub config: TrainConfig,
    /// One entry per joint step.
    pub log: Vec<StepLog>,
    /// Mean reconstruction error per pretraining epoch.
    pub pretrain_log: Vec<f64>,
    /// Rows the model was fitted on.
    pub train_rows: Vec<usize>,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn encode(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.params.encode(x)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PRETRAIN: u64 = 1;
const STREAM_MARKERS: u64 = 2;
const STREAM_PAIRS: u64 = 3;

fn gather<T: Scalar>(dataset: &Dataset<T>, rows: &[usize]) -> Array2<T> {
    dataset.features.select(Axis(0), rows)
}

/// Initializes the autoencoder and fits it to reconstruct single training rows.
/// Returns the parameters and the mean squared reconstruction norm of every epoch.
pub fn pretrain_autoencoder<T: Scalar>(
    dataset: &Dataset<T>,
    plan: &FoldPlan,
    test_fold: Option<usize>,
    config: &TrainConfig,
) -> Result<(Autoencoder<T>, Vec<f64>)> {
    config.validate()?;
    let rows = plan.train_rows(test_fold);
    if rows.is_empty() {
        return Err(SmellError::InvalidDataset("empty training fold".into()));
    }
    let mut net: Autoencoder<T> =
        init_params(dataset.n_features(), config.latent_dim, &config.hidden, &config.init, config.seed)?;
    let mut enc_opt = Sgd::new(&net.encoder, T::of(config.learning_rate), T::of(config.momentum));
    let mut dec_opt = Sgd::new(&net.decoder, T::of(config.learning_rate), T::of(config.momentum));
    let mut rng = stream_rng(config.seed, STREAM_PRETRAIN);
    let mut order = rows.clone();
    let mut history = Vec::with_capacity(config.pretrain_epochs);
    for epoch in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = gather(dataset, batch);
            let b = T::of(batch.len() as f64);
            let (z, enc_cache) = net.encoder.forward(x.view())?;
            let (rec, dec_cache) = net.decoder.forward(z.view())?;
            let residual = &rec - &x;
            let loss = residual.mapv(|v| v * v).sum() / b;
            if !loss.is_finite() {
                return Err(SmellError::NonFinite {
                    what: format!("pretraining loss (epoch {epoch})"),
                    step: epoch,
                });
            }
            epoch_loss += loss.as_f64() * batch.len() as f64;
            let grad = residual * (T::of(2.0) / b);
            let (dec_grad, d_z) = net.decoder.backward(&dec_cache, grad.view())?;
            let (enc_grad, _) = net.encoder.backward(&enc_cache, d_z.view())?;
            dec_opt.step(&mut net.decoder, &dec_grad)?;
            enc_opt.step(&mut net.encoder, &enc_grad)?;
        }
        history.push(epoch_loss / rows.len() as f64);
    }
    Ok((net, history))
}

/// S-space points of `count` sampled pairs of one kind, using precomputed latents
/// indexed by dataset row.
fn sampled_s_vectors<T: Scalar>(
    latents: &Array2<T>,
    sampler: &PairSampler,
    kind: PairKind,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<T>> {
    let mut out = Array2::zeros((count, latents.ncols()));
    for r in 0..count {
        let pair = match kind {
            PairKind::Similar => sampler.sample_similar(rng)?,
            PairKind::Dissimilar => sampler.sample_dissimilar(rng)?,
        };
        out.row_mut(r).assign(&sspace_map(latents.row(pair.i), latents.row(pair.j))?);
    }
    Ok(out)
}

fn ordered_pair_counts(labels: &[usize], rows: &[usize]) -> (usize, usize) {
    let mut counts = std::collections::BTreeMap::new();
    for &r in rows {
        *counts.entry(labels[r]).or_insert(0usize) += 1;
    }
    let n = rows.len();
    let similar = counts.values().map(|&c| c * (c - 1)).sum();
    let dissimilar = counts.values().map(|&c| c * (n - c)).sum();
    (similar, dissimilar)
}

/// Lloyd initialization of the markers from the S-space points of sampled training
/// pairs under the current encoder.
pub fn initialize_markers<T: Scalar>(
    params: &Autoencoder<T>,
    dataset: &Dataset<T>,
    rows: &[usize],
    config: &TrainConfig,
) -> Result<MarkerSet<T>> {
    let sampler = PairSampler::new(&dataset.labels, rows);
    let (n_similar, n_dissimilar) = ordered_pair_counts(&dataset.labels, rows);
    let mut latents = Array2::zeros((dataset.n_rows(), config.latent_dim));
    let encoded = params.encode(gather(dataset, rows).view())?;
    for (k, &r) in rows.iter().enumerate() {
        latents.row_mut(r).assign(&encoded.row(k));
    }
    let mut rng = stream_rng(config.seed, STREAM_MARKERS);
    let similar = sampled_s_vectors(&latents, &sampler, PairKind::Similar, config.marker_samples.min(n_similar), &mut rng)?;
    let dissimilar =
        sampled_s_vectors(&latents, &sampler, PairKind::Dissimilar, config.marker_samples.min(n_dissimilar), &mut rng)?;
    let kmeans = KMeansParams {
        max_iter: config.kmeans_max_iter,
        tol: config.kmeans_tol,
    };
    marker_init(
        similar.view(),
        dissimilar.view(),
        config.positive_markers,
        config.negative_markers,
        &kmeans,
        config.seed ^ 0x9e37_79b9_7f4a_7c15,
    )
}

/// Pretraining, marker initialization and joint optimization on the rows outside
/// `test_fold`.
pub fn train<T: Scalar>(
    dataset: &Dataset<T>,
    plan: &FoldPlan,
    test_fold: Option<usize>,
    config: &TrainConfig,
) -> Result<TrainedModel<T>> {
    config.validate()?;
    let rows = plan.train_rows(test_fold);
    let (mut params, pretrain_log) = pretrain_autoencoder(dataset, plan, test_fold, config)?;
    let mut markers = initialize_markers(&params, dataset, &rows, config)?;

    let constants = config.constants::<T>();
    let lr = T::of(config.learning_rate);
    let mu = T::of(config.momentum);
    let mut enc_opt = Sgd::new(&params.encoder, lr, mu);
    let mut dec_opt = Sgd::new(&params.decoder, lr, mu);
    let mut marker_opt = Sgd::new(&markers, lr, mu);

    let sampler = PairSampler::new(&dataset.labels, &rows);
    let mut rng = stream_rng(config.seed, STREAM_PAIRS);
    let steps = config.joint_epochs * rows.len().div_ceil(config.batch_size);
    let mut log = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch = sampler.sample_batch(config.batch_size, &mut rng)?;
        let left = gather(dataset, &batch.left());
        let right = gather(dataset, &batch.right());
        let grads = objective(&params, &markers, left.view(), right.view(), &batch.kinds(), &constants)?;
        if !grads.loss.is_finite() {
            return Err(SmellError::NonFinite {
                what: "joint loss".into(),
                step,
            });
        }
        let annotate = |e: SmellError| match e {
            SmellError::NonFinite { what, .. } => SmellError::NonFinite { what, step },
            other => other,
        };
        marker_opt.step(&mut markers, &grads.markers).map_err(annotate)?;
        enc_opt.step(&mut params.encoder, &grads.encoder).map_err(annotate)?;
        dec_opt.step(&mut params.decoder, &grads.decoder).map_err(annotate)?;
        log.push(StepLog {
            step,
            h_c: grads.loss.h_c.as_f64(),
            r_r_term: grads.loss.r_r_term.as_f64(),
            r_d_term: grads.loss.r_d_term.as_f64(),
            total: grads.loss.total.as_f64(),
        });
    }
    if !all_finite(&params) || !all_finite(&markers) {
        return Err(SmellError::NonFinite {
            what: "trained parameters".into(),
            step: steps,
        });
    }
    Ok(TrainedModel {
        params,
        markers,
        config: config.clone(),
        log,
        pretrain_log,
        train_rows: rows,
    })
}

/// Smallest squared marker norm of each group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub min_pos_norm: f64,
    pub min_neg_norm: f64,
    /// Some positive marker is strictly closer to the origin than every negative one.
    pub holds: bool,
}

pub fn proposition1_check<T: Scalar>(markers: &MarkerSet<T>) -> OptimalityReport {
    let min_norm = |group: &Array2<T>| {
        group
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    let min_pos_norm = min_norm(&markers.positive);
    let min_neg_norm = min_norm(&markers.negative);
    OptimalityReport {
        min_pos_norm,
        min_neg_norm,
        holds: min_pos_norm < min_neg_norm,
    }
}
