//! Versioned JSON checkpoints: named network tensors, markers and the run config.

use std::fs;
use std::path::Path;

use ndarray::ArrayViewD;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmellError};
use crate::kernel::{MarkerRecord, MarkerSet};
use crate::nn::{Autoencoder, Mlp, Parameters};
use crate::scalar::Scalar;
use crate::trainer::TrainConfig;

pub const FORMAT: &str = "smell-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    /// Encoder widths from input to latent.
    pub encoder_dims: Vec<usize>,
    pub tensors: Vec<NamedTensor>,
    pub markers: Vec<MarkerRecord>,
}

fn tensor_names(prefix: &str, mlp_layers: usize) -> Vec<String> {
    (0..mlp_layers)
        .flat_map(|l| [format!("{prefix}.{l}.weight"), format!("{prefix}.{l}.bias")])
        .collect()
}

fn named<T: Scalar>(name: String, t: ArrayViewD<'_, T>) -> NamedTensor {
    NamedTensor {
        name,
        shape: t.shape().to_vec(),
        data: t.iter().map(|v| v.as_f64()).collect(),
    }
}

fn export_mlp<T: Scalar>(prefix: &str, mlp: &Mlp<T>) -> Vec<NamedTensor> {
    tensor_names(prefix, mlp.layers.len())
        .into_iter()
        .zip(mlp.tensors())
        .map(|(n, t)| named(n, t))
        .collect()
}

impl Checkpoint {
    pub fn from_parts<T: Scalar>(params: &Autoencoder<T>, markers: &MarkerSet<T>, config: &TrainConfig) -> Self {
        let mut tensors = export_mlp("encoder", &params.encoder);
        tensors.extend(export_mlp("decoder", &params.decoder));
        Self {
            format: FORMAT.into(),
            version: VERSION,
            config: config.clone(),
            encoder_dims: params.encoder.dims(),
            tensors,
            markers: markers.to_records(),
        }
    }

    /// Rebuilds the network and markers, checking every tensor name and shape.
    pub fn restore<T: Scalar>(&self) -> Result<(Autoencoder<T>, MarkerSet<T>)> {
        if self.format != FORMAT {
            return Err(SmellError::Checkpoint(format!("unexpected format '{}'", self.format)));
        }
        if self.version != VERSION {
            return Err(SmellError::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                self.version
            )));
        }
        let dims = &self.encoder_dims;
        if dims.len() < 2 {
            return Err(SmellError::Checkpoint("encoder needs at least two widths".into()));
        }
        let (m, n) = (dims[0], dims[dims.len() - 1]);
        let mut params = Autoencoder::<T>::zeros(m, n, &dims[1..dims.len() - 1]);
        let layers = params.encoder.layers.len();
        let mut names = tensor_names("encoder", layers);
        names.extend(tensor_names("decoder", layers));
        if names.len() != self.tensors.len() {
            return Err(SmellError::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((name, mut slot), stored) in names.iter().zip(params.tensors_mut()).zip(&self.tensors) {
            if &stored.name != name {
                return Err(SmellError::Checkpoint(format!("expected tensor '{name}', found '{}'", stored.name)));
            }
            if stored.shape != slot.shape() || stored.data.len() != slot.len() {
                return Err(SmellError::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, expected {:?}",
                    stored.shape,
                    slot.shape()
                )));
            }
            for (dst, &src) in slot.iter_mut().zip(&stored.data) {
                *dst = T::of(src);
            }
        }
        params.validate()?;
        let markers = MarkerSet::from_records(&self.markers)?;
        if markers.dim() != n {
            return Err(SmellError::DimensionMismatch {
                expected: n,
                actual: markers.dim(),
            });
        }
        Ok((params, markers))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| SmellError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|source| SmellError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SmellError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| SmellError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
