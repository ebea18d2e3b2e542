use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation's output.
    pub(crate) fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense,
    /// Dense layer whose effective weight is `weight * mask`; mask is `out x in` with 0/1 entries.
    MaskedDense(Array2<f64>),
    BatchNorm,
}

/// Shape and kind of one layer in a sequential stack.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { kind: LayerKind::Dense, in_dim, out_dim, activation }
    }

    pub fn masked(mask: Array2<f64>, activation: Activation) -> Self {
        let (out_dim, in_dim) = mask.dim();
        Self { kind: LayerKind::MaskedDense(mask), in_dim, out_dim, activation }
    }

    pub fn batch_norm(dim: usize) -> Self {
        Self { kind: LayerKind::BatchNorm, in_dim: dim, out_dim: dim, activation: Activation::Identity }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(NnError::Spec("layer dimensions must be at least 1".into()));
        }
        match &self.kind {
            LayerKind::Dense => Ok(()),
            LayerKind::MaskedDense(mask) => {
                if mask.dim() != (self.out_dim, self.in_dim) {
                    return Err(NnError::Spec(format!(
                        "mask shape {:?} does not match out x in = {} x {}",
                        mask.dim(),
                        self.out_dim,
                        self.in_dim
                    )));
                }
                if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
                    return Err(NnError::Spec("mask entries must be 0 or 1".into()));
                }
                Ok(())
            }
            LayerKind::BatchNorm => {
                if self.in_dim != self.out_dim {
                    return Err(NnError::Spec("batch norm must preserve dimension".into()));
                }
                Ok(())
            }
        }
    }
}

pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// A layer together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        /// `out x in`.
        weight: Array2<f64>,
        bias: Array1<f64>,
        mask: Option<Array2<f64>>,
        activation: Activation,
    },
    /// `y = (x - mean) / sqrt(var + eps) * exp(log_scale) + offset`.
    ///
    /// The scale is stored in log space so it stays positive, which keeps the
    /// layer invertible when it is used inside a flow.
    BatchNorm {
        log_scale: Array1<f64>,
        offset: Array1<f64>,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
    },
}

impl Layer {
    /// Glorot-uniform weights, zero biases; batch norm starts as the identity.
    pub fn init<R: Rng>(spec: &LayerSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        Ok(match &spec.kind {
            LayerKind::Dense | LayerKind::MaskedDense(_) => {
                let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
                let mut weight = Array2::from_shape_fn((spec.out_dim, spec.in_dim), |_| rng.random_range(-limit..limit));
                let mask = match &spec.kind {
                    LayerKind::MaskedDense(m) => {
                        weight *= m;
                        Some(m.clone())
                    }
                    _ => None,
                };
                Layer::Dense { weight, bias: Array1::zeros(spec.out_dim), mask, activation: spec.activation }
            }
            LayerKind::BatchNorm => Layer::BatchNorm {
                log_scale: Array1::zeros(spec.in_dim),
                offset: Array1::zeros(spec.in_dim),
                running_mean: Array1::zeros(spec.in_dim),
                running_var: Array1::ones(spec.in_dim),
            },
        })
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Dense { weight, .. } => weight.ncols(),
            Layer::BatchNorm { log_scale, .. } => log_scale.len(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Dense { weight, .. } => weight.nrows(),
            Layer::BatchNorm { log_scale, .. } => log_scale.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Layer::Dense { weight, bias, .. } => weight.len() + bias.len(),
            Layer::BatchNorm { log_scale, offset, .. } => log_scale.len() + offset.len(),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense { weight, mask, activation, .. } => LayerSpec {
                kind: match mask {
                    Some(m) => LayerKind::MaskedDense(m.clone()),
                    None => LayerKind::Dense,
                },
                in_dim: weight.ncols(),
                out_dim: weight.nrows(),
                activation: *activation,
            },
            Layer::BatchNorm { log_scale, .. } => LayerSpec::batch_norm(log_scale.len()),
        }
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense { weight, bias, .. } => {
                vec![weight.as_slice_mut().expect("standard layout"), bias.as_slice_mut().expect("standard layout")]
            }
            Layer::BatchNorm { log_scale, offset, .. } => vec![
                log_scale.as_slice_mut().expect("standard layout"),
                offset.as_slice_mut().expect("standard layout"),
            ],
        }
    }

    /// Weight with the mask applied.
    pub(crate) fn effective_weight(&self) -> Option<std::borrow::Cow<'_, Array2<f64>>> {
        match self {
            Layer::Dense { weight, mask: None, .. } => Some(std::borrow::Cow::Borrowed(weight)),
            Layer::Dense { weight, mask: Some(m), .. } => Some(std::borrow::Cow::Owned(weight * m)),
            Layer::BatchNorm { .. } => None,
        }
    }
}

/// Column means and population variances.
pub(crate) fn column_moments(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let centered = x - &mean;
    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
    (mean, var)
}
