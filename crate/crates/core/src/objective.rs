//! Training objective `J = r_HC * H_c + R_r + R_d` and its analytic gradients.
//!
//! * `H_c` is the mean over the batch of the pair cross-entropy between the one-hot
//!   pair label and `(q+, q-)`, with both shares clamped to `[1e-7, 1 - 1e-7]`.
//! * `R_r = r_r / g * sum_p (||x_i - x_i'||^2 + ||x_j - x_j'||^2)`.
//! * `R_d = r_d * (R_d+ + R_d-)`, where `R_d+` is the ordered double sum over distinct
//!   positive markers of `1 / (||mu_a - mu_b||^2 + eps)` divided by `C(k, 2)`; a group
//!   with a single marker contributes 0.
//!
//! The decoder only sees `R_r`. Markers see `H_c` and `R_d`. The encoder sees `H_c`
//! through the S-space map and `R_r` through the decoder.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::data::PairKind;
use crate::error::{Result, SmellError};
use crate::kernel::{kernel_values, scores_from_kernel, MarkerSet, PairScore};
use crate::nn::{Autoencoder, Mlp};
use crate::scalar::Scalar;

/// Lower clamp applied to `q+` and `q-` inside the logarithm.
pub const Q_CLAMP: f64 = 1e-7;

/// Calibration constants of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants<T> {
    pub r_hc: T,
    pub r_r: T,
    pub r_d: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for LossConstants<T> {
    fn default() -> Self {
        Self {
            r_hc: T::one(),
            r_r: T::of(1e-3),
            r_d: T::of(0.1),
            epsilon: T::of(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    /// Mean cross-entropy before scaling by `r_HC`.
    pub h_c: T,
    pub r_r_term: T,
    pub r_d_term: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    fn compose(h_c: T, r_r_term: T, r_d_term: T, r_hc: T) -> Self {
        Self {
            h_c,
            r_r_term,
            r_d_term,
            total: r_hc * h_c + r_r_term + r_d_term,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h_c.is_finite() && self.r_r_term.is_finite() && self.r_d_term.is_finite() && self.total.is_finite()
    }
}

fn clamp_q<T: Scalar>(q: T) -> T {
    q.max(T::of(Q_CLAMP)).min(T::one() - T::of(Q_CLAMP))
}

fn pair_cross_entropy<T: Scalar>(score: &PairScore<T>, kind: PairKind) -> T {
    match kind {
        PairKind::Similar => -clamp_q(score.q_plus).ln(),
        PairKind::Dissimilar => -clamp_q(score.q_minus).ln(),
    }
}

/// Mean pair cross-entropy.
pub fn cross_entropy<T: Scalar>(scores: &[PairScore<T>], kinds: &[PairKind]) -> Result<T> {
    if scores.is_empty() {
        return Err(SmellError::InvalidConfig("cross-entropy of an empty batch".into()));
    }
    if scores.len() != kinds.len() {
        return Err(SmellError::DimensionMismatch {
            expected: scores.len(),
            actual: kinds.len(),
        });
    }
    let sum: T = scores.iter().zip(kinds).map(|(s, &k)| pair_cross_entropy(s, k)).sum();
    Ok(sum / T::of(scores.len() as f64))
}

/// `r_r / N * sum_p (||x_i - x_i'||^2 + ||x_j - x_j'||^2)`; rows of the four matrices
/// are aligned by pair.
pub fn reconstruction_loss<T: Scalar>(
    x_left: ArrayView2<'_, T>,
    x_right: ArrayView2<'_, T>,
    rec_left: ArrayView2<'_, T>,
    rec_right: ArrayView2<'_, T>,
    r_r: T,
) -> Result<T> {
    for other in [x_right.dim(), rec_left.dim(), rec_right.dim()] {
        if other != x_left.dim() {
            return Err(SmellError::DimensionMismatch {
                expected: x_left.len(),
                actual: other.0 * other.1,
            });
        }
    }
    if x_left.nrows() == 0 {
        return Ok(T::zero());
    }
    let sq = |a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>| -> T {
        a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
    };
    Ok(r_r * (sq(&x_left, &rec_left) + sq(&x_right, &rec_right)) / T::of(x_left.nrows() as f64))
}

fn binomial2(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

fn group_repulsion<T: Scalar>(group: ArrayView2<'_, T>, epsilon: T) -> T {
    let k = group.nrows();
    if k < 2 {
        return T::zero();
    }
    let mut sum = T::zero();
    for a in 0..k {
        for b in 0..k {
            if a != b {
                let d2: T = (&group.row(a) - &group.row(b)).mapv(|v| v * v).sum();
                sum += T::one() / (d2 + epsilon);
            }
        }
    }
    sum / T::of(binomial2(k) as f64)
}

/// `r_d * (R_d+ + R_d-)`.
pub fn repulsive_loss<T: Scalar>(markers: &MarkerSet<T>, r_d: T, epsilon: T) -> T {
    if r_d == T::zero() {
        return T::zero();
    }
    r_d * (group_repulsion(markers.positive.view(), epsilon) + group_repulsion(markers.negative.view(), epsilon))
}

fn group_repulsion_gradient<T: Scalar>(group: ArrayView2<'_, T>, scale: T, epsilon: T) -> Array2<T> {
    let k = group.nrows();
    let mut grad = Array2::zeros(group.raw_dim());
    if k < 2 || scale == T::zero() {
        return grad;
    }
    // each unordered pair appears twice in the ordered sum
    let factor = T::of(-4.0) * scale / T::of(binomial2(k) as f64);
    for t in 0..k {
        for u in 0..k {
            if t != u {
                let diff = &group.row(t) - &group.row(u);
                let d2: T = diff.mapv(|v| v * v).sum();
                let w = factor / ((d2 + epsilon) * (d2 + epsilon));
                grad.row_mut(t).scaled_add(w, &diff);
            }
        }
    }
    grad
}

/// Gradient of [`repulsive_loss`] with respect to every marker.
pub fn repulsive_gradient<T: Scalar>(markers: &MarkerSet<T>, r_d: T, epsilon: T) -> MarkerSet<T> {
    MarkerSet {
        positive: group_repulsion_gradient(markers.positive.view(), r_d, epsilon),
        negative: group_repulsion_gradient(markers.negative.view(), r_d, epsilon),
    }
}

/// Per-pair kernel intermediates for one S-space point.
struct PairTerms<T> {
    kernel: Vec<T>,
    /// dℓ/d kernel_m for the (unscaled) pair loss.
    d_kernel: Vec<T>,
}

fn pair_terms<T: Scalar>(kernel: Vec<T>, score: &PairScore<T>, kind: PairKind, n_positive: usize) -> PairTerms<T> {
    let inside = |q: T| q > T::of(Q_CLAMP) && q < T::one() - T::of(Q_CLAMP);
    let (d_plus, d_minus) = match kind {
        PairKind::Similar if inside(score.q_plus) => (-T::one() / score.q_plus, T::zero()),
        PairKind::Dissimilar if inside(score.q_minus) => (T::zero(), -T::one() / score.q_minus),
        _ => (T::zero(), T::zero()),
    };
    let total: T = kernel.iter().copied().sum();
    let d_kernel = (0..kernel.len())
        .map(|m| {
            let (dp, dm) = if m < n_positive { (T::one(), T::zero()) } else { (T::zero(), T::one()) };
            (d_plus * (dp - score.q_plus) + d_minus * (dm - score.q_minus)) / total
        })
        .collect();
    PairTerms { kernel, d_kernel }
}

/// Gradient of `r_HC * H_c + R_d` with respect to the markers. `s_vectors` holds one
/// S-space point per pair.
pub fn marker_gradient<T: Scalar>(
    s_vectors: ArrayView2<'_, T>,
    kinds: &[PairKind],
    markers: &MarkerSet<T>,
    constants: &LossConstants<T>,
) -> Result<MarkerSet<T>> {
    Ok(cross_entropy_gradients(s_vectors, kinds, markers, constants.r_hc)?.markers
        .add(&repulsive_gradient(markers, constants.r_d, constants.epsilon)))
}

struct CrossEntropyPass<T> {
    h_c: T,
    markers: MarkerSet<T>,
    /// dJ/ds per pair, already scaled by `r_HC / g`.
    d_s: Array2<T>,
}

fn cross_entropy_gradients<T: Scalar>(
    s_vectors: ArrayView2<'_, T>,
    kinds: &[PairKind],
    markers: &MarkerSet<T>,
    r_hc: T,
) -> Result<CrossEntropyPass<T>> {
    let g = s_vectors.nrows();
    if g == 0 {
        return Err(SmellError::InvalidConfig("empty batch".into()));
    }
    if kinds.len() != g {
        return Err(SmellError::DimensionMismatch { expected: g, actual: kinds.len() });
    }
    if s_vectors.ncols() != markers.dim() {
        return Err(SmellError::DimensionMismatch {
            expected: markers.dim(),
            actual: s_vectors.ncols(),
        });
    }
    let scale = r_hc / T::of(g as f64);
    let mut grad = MarkerSet::zeros(markers.n_positive(), markers.n_negative(), markers.dim());
    let mut d_s = Array2::zeros(s_vectors.raw_dim());
    let mut loss = T::zero();
    let two = T::of(2.0);
    for (p, (s, &kind)) in s_vectors.rows().into_iter().zip(kinds).enumerate() {
        let kernel = kernel_values(s, markers);
        let score = scores_from_kernel(kernel.clone(), markers.n_positive());
        loss += pair_cross_entropy(&score, kind);
        let terms = pair_terms(kernel, &score, kind, markers.n_positive());
        for m in 0..markers.len() {
            let c = scale * terms.d_kernel[m] * two * terms.kernel[m] * terms.kernel[m];
            if c == T::zero() {
                continue;
            }
            let diff = &s - &markers.marker(m);
            let row = if m < markers.n_positive() {
                grad.positive.row_mut(m)
            } else {
                grad.negative.row_mut(m - markers.n_positive())
            };
            let mut row = row;
            row.scaled_add(c, &diff);
            d_s.row_mut(p).scaled_add(-c, &diff);
        }
    }
    Ok(CrossEntropyPass {
        h_c: loss / T::of(g as f64),
        markers: grad,
        d_s,
    })
}

impl<T: Scalar> MarkerSet<T> {
    fn add(mut self, other: &MarkerSet<T>) -> Self {
        self.positive += &other.positive;
        self.negative += &other.negative;
        self
    }
}

/// Loss value and the gradients of every parameter group, all taken at the same
/// parameter snapshot.
#[derive(Debug, Clone)]
pub struct ObjectiveGradients<T> {
    pub loss: LossBreakdown<T>,
    pub markers: MarkerSet<T>,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    /// S-space point of every pair.
    pub s_vectors: Array2<T>,
    pub scores: Vec<PairScore<T>>,
}

fn check_pairs<T: Scalar>(x_left: &ArrayView2<'_, T>, x_right: &ArrayView2<'_, T>, kinds: &[PairKind]) -> Result<()> {
    if x_left.dim() != x_right.dim() {
        return Err(SmellError::DimensionMismatch {
            expected: x_left.nrows(),
            actual: x_right.nrows(),
        });
    }
    if kinds.len() != x_left.nrows() {
        return Err(SmellError::DimensionMismatch {
            expected: x_left.nrows(),
            actual: kinds.len(),
        });
    }
    if kinds.is_empty() {
        return Err(SmellError::InvalidConfig("empty batch".into()));
    }
    Ok(())
}

fn s_space<T: Scalar>(z: &Array2<T>, g: usize) -> (Array2<T>, Array2<T>) {
    let diff = &z.slice(s![..g, ..]) - &z.slice(s![g.., ..]);
    let s_vectors = diff.mapv(|v| v.abs());
    // d|d|/dd, with 0 at ties
    let sign = diff.mapv(|v| {
        if v > T::zero() {
            T::one()
        } else if v < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    });
    (s_vectors, sign)
}

/// Full forward and backward pass over a batch of `g` pairs; row `p` of `x_left` and
/// `x_right` are the two members of pair `p`.
pub fn objective<T: Scalar>(
    net: &Autoencoder<T>,
    markers: &MarkerSet<T>,
    x_left: ArrayView2<'_, T>,
    x_right: ArrayView2<'_, T>,
    kinds: &[PairKind],
    constants: &LossConstants<T>,
) -> Result<ObjectiveGradients<T>> {
    check_pairs(&x_left, &x_right, kinds)?;
    let g = kinds.len();
    let x = concatenate![Axis(0), x_left, x_right];
    let (z, enc_cache) = net.encoder.forward(x.view())?;
    let (s_vectors, sign) = s_space(&z, g);

    let ce = cross_entropy_gradients(s_vectors.view(), kinds, markers, constants.r_hc)?;
    let mut d_z = Array2::zeros(z.raw_dim());
    let d_left = &ce.d_s * &sign;
    d_z.slice_mut(s![..g, ..]).assign(&d_left);
    d_z.slice_mut(s![g.., ..]).assign(&d_left.mapv(|v| -v));

    let (r_r_term, decoder) = if constants.r_r == T::zero() {
        (T::zero(), Mlp::zeros(&net.decoder.dims()))
    } else {
        let (rec, dec_cache) = net.decoder.forward(z.view())?;
        let r_r_term = reconstruction_loss(
            x_left,
            x_right,
            rec.slice(s![..g, ..]),
            rec.slice(s![g.., ..]),
            constants.r_r,
        )?;
        let d_rec = (&rec - &x) * (T::of(2.0) * constants.r_r / T::of(g as f64));
        let (decoder, d_z_rec) = net.decoder.backward(&dec_cache, d_rec.view())?;
        d_z += &d_z_rec;
        (r_r_term, decoder)
    };
    let (encoder, _) = net.encoder.backward(&enc_cache, d_z.view())?;

    let r_d_term = repulsive_loss(markers, constants.r_d, constants.epsilon);
    let marker_grad = ce.markers.add(&repulsive_gradient(markers, constants.r_d, constants.epsilon));
    let scores = s_vectors
        .rows()
        .into_iter()
        .map(|s| scores_from_kernel(kernel_values(s, markers), markers.n_positive()))
        .collect();
    Ok(ObjectiveGradients {
        loss: LossBreakdown::compose(ce.h_c, r_r_term, r_d_term, constants.r_hc),
        markers: marker_grad,
        encoder,
        decoder,
        s_vectors,
        scores,
    })
}

/// Loss value only.
pub fn objective_value<T: Scalar>(
    net: &Autoencoder<T>,
    markers: &MarkerSet<T>,
    x_left: ArrayView2<'_, T>,
    x_right: ArrayView2<'_, T>,
    kinds: &[PairKind],
    constants: &LossConstants<T>,
) -> Result<LossBreakdown<T>> {
    check_pairs(&x_left, &x_right, kinds)?;
    let g = kinds.len();
    let x = concatenate![Axis(0), x_left, x_right];
    let z = net.encode(x.view())?;
    let (s_vectors, _) = s_space(&z, g);
    let scores: Vec<PairScore<T>> = s_vectors
        .rows()
        .into_iter()
        .map(|s| scores_from_kernel(kernel_values(s, markers), markers.n_positive()))
        .collect();
    let h_c = cross_entropy(&scores, kinds)?;
    let r_r_term = if constants.r_r == T::zero() {
        T::zero()
    } else {
        let rec = net.decode(z.view())?;
        reconstruction_loss(x_left, x_right, rec.slice(s![..g, ..]), rec.slice(s![g.., ..]), constants.r_r)?
    };
    let r_d_term = repulsive_loss(markers, constants.r_d, constants.epsilon);
    Ok(LossBreakdown::compose(h_c, r_r_term, r_d_term, constants.r_hc))
}

/// Gradient of `r_HC * H_c + R_r` with respect to the encoder parameters.
pub fn encoder_gradient<T: Scalar>(
    net: &Autoencoder<T>,
    markers: &MarkerSet<T>,
    x_left: ArrayView2<'_, T>,
    x_right: ArrayView2<'_, T>,
    kinds: &[PairKind],
    constants: &LossConstants<T>,
) -> Result<Mlp<T>> {
    Ok(objective(net, markers, x_left, x_right, kinds, constants)?.encoder)
}

/// Gradient of `R_r` with respect to the decoder parameters.
pub fn decoder_gradient<T: Scalar>(
    net: &Autoencoder<T>,
    x_left: ArrayView2<'_, T>,
    x_right: ArrayView2<'_, T>,
    r_r: T,
) -> Result<Mlp<T>> {
    if x_left.dim() != x_right.dim() {
        return Err(SmellError::DimensionMismatch {
            expected: x_left.nrows(),
            actual: x_right.nrows(),
        });
    }
    let g = x_left.nrows();
    if r_r == T::zero() || g == 0 {
        return Ok(Mlp::zeros(&net.decoder.dims()));
    }
    let x = concatenate![Axis(0), x_left, x_right];
    let z = net.encode(x.view())?;
    let (rec, cache) = net.decoder.forward(z.view())?;
    let d_rec = (&rec - &x) * (T::of(2.0) * r_r / T::of(g as f64));
    Ok(net.decoder.backward(&cache, d_rec.view())?.0)
}
