//! Fully-connected autoencoder with hand-written backpropagation and SGD with momentum.

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmellError};
use crate::scalar::Scalar;

/// Hidden widths between input and latent layer.
pub const DEFAULT_HIDDEN: [usize; 3] = [512, 512, 2048];

/// Normal initialization of weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub weight_mean: f64,
    pub weight_std: f64,
    pub bias_mean: f64,
    pub bias_std: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        Self {
            weight_mean: 0.0,
            weight_std: 0.01,
            bias_mean: 0.5,
            bias_std: 0.01,
        }
    }
}

/// Dense layer computing `x · weight + bias`; `weight` is `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Multi-layer perceptron with ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Activations recorded by [`Mlp::forward`] for use in [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    inputs: Vec<Array2<T>>,
    pre_activations: Vec<Array2<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    /// Pre-activation of every layer, input layer first.
    pub fn pre_activations(&self) -> &[Array2<T>] {
        &self.pre_activations
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn random(dims: &[usize], init: &InitScheme, rng: &mut ChaCha8Rng) -> Self {
        let weights = Normal::new(init.weight_mean, init.weight_std).expect("valid weight std");
        let biases = Normal::new(init.bias_mean, init.bias_std).expect("valid bias std");
        let layers = dims
            .windows(2)
            .map(|w| {
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || T::of(weights.sample(rng)));
                let bias = Array1::from_shape_simple_fn(w[1], || T::of(biases.sample(rng)));
                Dense { weight, bias }
            })
            .collect();
        Self { layers }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(Dense::inputs).collect();
        dims.extend(self.layers.last().map(Dense::outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(SmellError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batched forward pass (one sample per row) that records activations.
    pub fn forward(&self, x: ArrayView2<'_, T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            let pre = current.dot(&layer.weight) + &layer.bias;
            let next = if idx + 1 < self.layers.len() {
                pre.mapv(relu)
            } else {
                pre.clone()
            };
            inputs.push(current);
            pre_activations.push(pre);
            current = next;
        }
        Ok((
            current,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Forward pass without caching.
    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut current = x.to_owned();
        for (idx, layer) in self.layers.iter().enumerate() {
            current = current.dot(&layer.weight) + &layer.bias;
            if idx + 1 < self.layers.len() {
                current.mapv_inplace(relu);
            }
        }
        Ok(current)
    }

    /// Backpropagates `grad_output` (dL/d output, one row per sample). Returns the
    /// parameter gradients and dL/d input.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_output: ArrayView2<'_, T>,
    ) -> Result<(Mlp<T>, Array2<T>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(SmellError::DimensionMismatch {
                expected: self.layers.len(),
                actual: cache.inputs.len(),
            });
        }
        let expected = (cache.batch_size(), self.output_dim());
        if grad_output.dim() != expected {
            return Err(SmellError::DimensionMismatch {
                expected: expected.0 * expected.1,
                actual: grad_output.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            if idx + 1 < self.layers.len() {
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[idx])
                    .for_each(|g, &pre| {
                        if pre <= T::zero() {
                            *g = T::zero();
                        }
                    });
            }
            let input = &cache.inputs[idx];
            if input.dim() != (upstream.nrows(), layer.inputs()) {
                return Err(SmellError::DimensionMismatch {
                    expected: layer.inputs(),
                    actual: input.ncols(),
                });
            }
            let weight = input.t().dot(&upstream);
            let bias = upstream.sum_axis(Axis(0));
            let next = upstream.dot(&layer.weight.t());
            grads.push(Dense { weight, bias });
            upstream = next;
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, upstream))
    }
}

fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Encoder and decoder networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T> {
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
}

/// Builds `m-h1-..-hk-n` encoder and mirrored `n-hk-..-h1-m` decoder.
pub fn init_params<T: Scalar>(
    m: usize,
    n: usize,
    hidden: &[usize],
    init: &InitScheme,
    seed: u64,
) -> Result<Autoencoder<T>> {
    if m == 0 || n == 0 || hidden.contains(&0) {
        return Err(SmellError::InvalidConfig(
            "network dimensions must all be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (enc, dec) = layer_dims(m, n, hidden);
    Ok(Autoencoder {
        encoder: Mlp::random(&enc, init, &mut rng),
        decoder: Mlp::random(&dec, init, &mut rng),
    })
}

fn layer_dims(m: usize, n: usize, hidden: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut enc = vec![m];
    enc.extend_from_slice(hidden);
    enc.push(n);
    let dec = enc.iter().rev().copied().collect();
    (enc, dec)
}

impl<T: Scalar> Autoencoder<T> {
    pub fn zeros(m: usize, n: usize, hidden: &[usize]) -> Self {
        let (enc, dec) = layer_dims(m, n, hidden);
        Self {
            encoder: Mlp::zeros(&enc),
            decoder: Mlp::zeros(&dec),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.encoder.predict(x)
    }

    pub fn decode(&self, z: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.decoder.predict(z)
    }

    /// Checks that the encoder output feeds the decoder input and that all values are finite.
    pub fn validate(&self) -> Result<()> {
        for mlp in [&self.encoder, &self.decoder] {
            for pair in mlp.layers.windows(2) {
                if pair[0].outputs() != pair[1].inputs() {
                    return Err(SmellError::DimensionMismatch {
                        expected: pair[0].outputs(),
                        actual: pair[1].inputs(),
                    });
                }
            }
        }
        if self.encoder.output_dim() != self.decoder.input_dim()
            || self.decoder.output_dim() != self.encoder.input_dim()
        {
            return Err(SmellError::DimensionMismatch {
                expected: self.encoder.output_dim(),
                actual: self.decoder.input_dim(),
            });
        }
        if !all_finite(self) {
            return Err(SmellError::Checkpoint("non-finite network parameter".into()));
        }
        Ok(())
    }
}

/// Uniform view over the tensors of a parameter container.
pub trait Parameters<T> {
    fn tensors(&self) -> Vec<ArrayViewD<'_, T>>;
    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>>;
}

impl<T: Scalar> Parameters<T> for Mlp<T> {
    fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.view().into_dyn(), l.bias.view().into_dyn()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.view_mut().into_dyn(), l.bias.view_mut().into_dyn()])
            .collect()
    }
}

impl<T: Scalar> Parameters<T> for Autoencoder<T> {
    fn tensors(&self) -> Vec<ArrayViewD<'_, T>> {
        let mut all = self.encoder.tensors();
        all.extend(self.decoder.tensors());
        all
    }

    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut all = self.encoder.tensors_mut();
        all.extend(self.decoder.tensors_mut());
        all
    }
}

pub fn all_finite<T: Scalar>(params: &impl Parameters<T>) -> bool {
    params
        .tensors()
        .iter()
        .all(|t| t.iter().all(|v| v.is_finite()))
}

/// Classical momentum SGD: `v <- momentum * v + grad`, `param <- param - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    velocity: Vec<ArrayD<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: &impl Parameters<T>, learning_rate: T, momentum: T) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: params
                .tensors()
                .iter()
                .map(|t| ArrayD::zeros(t.raw_dim()))
                .collect(),
        }
    }

    pub fn velocity(&self) -> &[ArrayD<T>] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut impl Parameters<T>, grads: &impl Parameters<T>) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || grads.len() != self.velocity.len() {
            return Err(SmellError::DimensionMismatch {
                expected: self.velocity.len(),
                actual: grads.len(),
            });
        }
        for (idx, g) in grads.iter().enumerate() {
            if g.shape() != self.velocity[idx].shape() || params[idx].shape() != g.shape() {
                return Err(SmellError::DimensionMismatch {
                    expected: self.velocity[idx].len(),
                    actual: g.len(),
                });
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(SmellError::NonFinite {
                    what: format!("gradient tensor {idx} entry {pos}"),
                    step: 0,
                });
            }
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            Zip::from(p).and(v).and(g).for_each(|p, v, &g| {
                *v = mu * *v + g;
                *p -= lr * *v;
            });
        }
        Ok(())
    }
}
