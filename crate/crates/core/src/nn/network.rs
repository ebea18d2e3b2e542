use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::{column_moments, Activation, Layer, LayerSpec, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
use super::NnError;
use crate::seeded_rng;

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm normalizes with batch statistics.
    Train,
    /// Batch norm uses running statistics; the forward pass is a fixed function.
    Eval,
}

#[derive(Debug, Clone)]
enum Cache {
    Dense { input: Array2<f64>, output: Array2<f64> },
    BatchNorm { xhat: Array2<f64>, inv_std: Array1<f64>, mean: Array1<f64>, var: Array1<f64> },
}

/// Intermediates recorded by [`Network::forward`] for a matching backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    network_id: u64,
    version: u64,
    mode: Mode,
    caches: Vec<Cache>,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Batch mean and variance seen by each batch-norm layer (train mode only),
    /// indexed by layer position.
    pub fn batch_stats(&self) -> Vec<Option<(&Array1<f64>, &Array1<f64>)>> {
        self.caches
            .iter()
            .map(|c| match c {
                Cache::BatchNorm { mean, var, .. } if self.mode == Mode::Train => Some((mean, var)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad {
    Dense { weight: Array2<f64>, bias: Array1<f64> },
    BatchNorm { log_scale: Array1<f64>, offset: Array1<f64> },
}

impl LayerGrad {
    fn slices(&self) -> [&[f64]; 2] {
        match self {
            LayerGrad::Dense { weight, bias } => {
                [weight.as_slice().expect("standard layout"), bias.as_slice().expect("standard layout")]
            }
            LayerGrad::BatchNorm { log_scale, offset } => {
                [log_scale.as_slice().expect("standard layout"), offset.as_slice().expect("standard layout")]
            }
        }
    }
}

/// Parameter gradients of every layer plus the gradient with respect to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub input: Array2<f64>,
}

impl Gradients {
    /// Flat views in the same order as [`Network::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|g| g.slices()).collect()
    }
}

/// A sequential stack of dense, masked-dense and batch-norm layers.
#[derive(Debug)]
pub struct Network {
    layers: Vec<Layer>,
    seed: u64,
    id: u64,
    version: u64,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            seed: self.seed,
            id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed),
            version: 0,
        }
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.seed == other.seed
    }
}

impl Network {
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        if specs.is_empty() {
            return Err(NnError::Spec("network needs at least one layer".into()));
        }
        for pair in specs.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(NnError::Spec(format!(
                    "layer output {} does not feed next layer input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let mut rng = seeded_rng(seed);
        let layers = specs.iter().map(|s| Layer::init(s, &mut rng)).collect::<Result<_, _>>()?;
        Ok(Self::from_layers(layers, seed))
    }

    pub(crate) fn from_layers(layers: Vec<Layer>, seed: u64) -> Self {
        Self { layers, seed, id: NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed), version: 0 }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Flat mutable parameter views (weight then bias, or log-scale then offset,
    /// per layer). Invalidates outstanding tapes.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(Layer::param_slices_mut).collect()
    }

    pub fn forward(&self, batch: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, Tape), NnError> {
        if batch.ncols() != self.in_dim() {
            return Err(NnError::Dimension { expected: self.in_dim(), found: batch.ncols() });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = batch.to_owned();
        for layer in &self.layers {
            match layer {
                Layer::Dense { bias, activation, .. } => {
                    let w = layer.effective_weight().expect("dense layer");
                    let mut z = x.dot(&w.t()) + bias;
                    activation.apply(&mut z);
                    caches.push(Cache::Dense { input: x, output: z.clone() });
                    x = z;
                }
                Layer::BatchNorm { log_scale, offset, running_mean, running_var } => {
                    let (mean, var) = match mode {
                        Mode::Train => {
                            if x.nrows() < 2 {
                                return Err(NnError::Spec("train-mode batch norm needs at least 2 rows".into()));
                            }
                            column_moments(&x)
                        }
                        Mode::Eval => (running_mean.clone(), running_var.clone()),
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt());
                    let xhat = (&x - &mean) * &inv_std;
                    let y = &xhat * &log_scale.mapv(f64::exp) + offset;
                    caches.push(Cache::BatchNorm { xhat, inv_std, mean, var });
                    x = y;
                }
            }
        }
        Ok((x, Tape { network_id: self.id, version: self.version, mode, caches }))
    }

    /// Eval-mode forward pass without a tape.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.forward(batch, Mode::Eval).map(|(y, _)| y)
    }

    /// Reverse-mode pass: given dL/d(output), returns dL/d(parameters) and dL/d(input).
    pub fn backward(&self, tape: &Tape, output_grad: &Array2<f64>) -> Result<Gradients, NnError> {
        if tape.network_id != self.id || tape.version != self.version {
            return Err(NnError::StaleTape);
        }
        let mut g = output_grad.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            match (layer, cache) {
                (Layer::Dense { mask, activation, .. }, Cache::Dense { input, output }) => {
                    if g.dim() != output.dim() {
                        return Err(NnError::Dimension { expected: output.ncols(), found: g.ncols() });
                    }
                    if *activation != Activation::Identity {
                        g.zip_mut_with(output, |gi, &yi| *gi *= activation.grad_from_output(yi));
                    }
                    // Degenerate shapes can come back from `dot` in column-major order.
                    let mut weight_grad = g.t().dot(input).as_standard_layout().into_owned();
                    if let Some(m) = mask {
                        weight_grad *= m;
                    }
                    let bias_grad = g.sum_axis(Axis(0));
                    let w = layer.effective_weight().expect("dense layer");
                    let input_grad = g.dot(w.as_ref());
                    grads.push(LayerGrad::Dense { weight: weight_grad, bias: bias_grad });
                    g = input_grad;
                }
                (Layer::BatchNorm { log_scale, .. }, Cache::BatchNorm { xhat, inv_std, .. }) => {
                    let scale = log_scale.mapv(f64::exp);
                    let log_scale_grad = (&g * xhat).sum_axis(Axis(0)) * &scale;
                    let offset_grad = g.sum_axis(Axis(0));
                    let dxhat = &g * &scale;
                    let input_grad = match tape.mode {
                        Mode::Eval => &dxhat * inv_std,
                        Mode::Train => {
                            let n = g.nrows() as f64;
                            let sum_d = dxhat.sum_axis(Axis(0));
                            let sum_dx = (&dxhat * xhat).sum_axis(Axis(0));
                            ((&dxhat * n - &sum_d) - &(xhat * &sum_dx)) * inv_std / n
                        }
                    };
                    grads.push(LayerGrad::BatchNorm { log_scale: log_scale_grad, offset: offset_grad });
                    g = input_grad;
                }
                _ => return Err(NnError::StaleTape),
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads, input: g })
    }

    /// Folds the batch statistics recorded in a train-mode tape into the
    /// running statistics (momentum 0.1, unbiased batch variance).
    pub fn absorb_batch_stats(&mut self, tape: &Tape) {
        if tape.mode != Mode::Train || tape.network_id != self.id {
            return;
        }
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (Layer::BatchNorm { running_mean, running_var, .. }, Cache::BatchNorm { mean, var, xhat, .. }) =
                (layer, cache)
            {
                let n = xhat.nrows() as f64;
                let unbiased = var * (n / (n - 1.0));
                running_mean.zip_mut_with(mean, |r, &m| *r = (1.0 - BATCH_NORM_MOMENTUM) * *r + BATCH_NORM_MOMENTUM * m);
                running_var
                    .zip_mut_with(&unbiased, |r, &v| *r = (1.0 - BATCH_NORM_MOMENTUM) * *r + BATCH_NORM_MOMENTUM * v);
            }
        }
    }

    pub fn to_blob(&self) -> NetworkBlob {
        NetworkBlob {
            magic: NETWORK_MAGIC.to_string(),
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .map(|layer| match layer {
                    Layer::Dense { weight, bias, mask, activation } => LayerBlob::Dense {
                        in_dim: weight.ncols(),
                        out_dim: weight.nrows(),
                        activation: *activation,
                        weight: weight.iter().copied().collect(),
                        bias: bias.to_vec(),
                        mask: mask.as_ref().map(|m| m.iter().map(|&v| v as u8).collect()),
                    },
                    Layer::BatchNorm { log_scale, offset, running_mean, running_var } => LayerBlob::BatchNorm {
                        dim: log_scale.len(),
                        log_scale: log_scale.to_vec(),
                        offset: offset.to_vec(),
                        running_mean: running_mean.to_vec(),
                        running_var: running_var.to_vec(),
                    },
                })
                .collect(),
        }
    }

    pub fn from_blob(blob: &NetworkBlob) -> Result<Self, NnError> {
        if blob.magic != NETWORK_MAGIC {
            return Err(NnError::Format(format!("bad magic '{}', expected '{NETWORK_MAGIC}'", blob.magic)));
        }
        let bad = |what: &str| NnError::Format(format!("{what} has the wrong length"));
        let mut layers = Vec::with_capacity(blob.layers.len());
        for l in &blob.layers {
            layers.push(match l {
                LayerBlob::Dense { in_dim, out_dim, activation, weight, bias, mask } => {
                    let weight = Array2::from_shape_vec((*out_dim, *in_dim), weight.clone()).map_err(|_| bad("weight"))?;
                    if bias.len() != *out_dim {
                        return Err(bad("bias"));
                    }
                    let mask = match mask {
                        Some(m) => Some(
                            Array2::from_shape_vec((*out_dim, *in_dim), m.iter().map(|&v| f64::from(v)).collect())
                                .map_err(|_| bad("mask"))?,
                        ),
                        None => None,
                    };
                    let layer = Layer::Dense { weight, bias: Array1::from(bias.clone()), mask, activation: *activation };
                    layer.spec().validate()?;
                    layer
                }
                LayerBlob::BatchNorm { dim, log_scale, offset, running_mean, running_var } => {
                    if [log_scale, offset, running_mean, running_var].iter().any(|v| v.len() != *dim) {
                        return Err(bad("batch-norm parameter"));
                    }
                    Layer::BatchNorm {
                        log_scale: Array1::from(log_scale.clone()),
                        offset: Array1::from(offset.clone()),
                        running_mean: Array1::from(running_mean.clone()),
                        running_var: Array1::from(running_var.clone()),
                    }
                }
            });
        }
        if layers.is_empty() {
            return Err(NnError::Format("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Format("layer dimensions do not chain".into()));
            }
        }
        Ok(Self::from_layers(layers, blob.seed))
    }
}

pub const NETWORK_MAGIC: &str = "oodkit-network-v1";

/// Serialized network: a layer manifest with parameters stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkBlob {
    pub magic: String,
    pub seed: u64,
    pub layers: Vec<LayerBlob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerBlob {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        /// `out_dim x in_dim`, row-major.
        weight: Vec<f64>,
        bias: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<Vec<u8>>,
    },
    BatchNorm {
        dim: usize,
        log_scale: Vec<f64>,
        offset: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::nn::layer::LayerSpec;

    fn identity_dense(d: usize) -> Network {
        let mut net = Network::new(&[LayerSpec::dense(d, d, Activation::Identity)], 0).unwrap();
        if let Layer::Dense { weight, .. } = &mut net.layers_mut()[0] {
            *weight = Array2::eye(d);
        }
        net
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let net = identity_dense(3);
        let x = array![[1.0, -2.0, 0.5], [3.0, 0.0, 7.0]];
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn train_batch_norm_standardizes() {
        let net = Network::new(&[LayerSpec::batch_norm(1)], 0).unwrap();
        let (y, _) = net.forward(&array![[1.0], [2.0], [3.0]], Mode::Train).unwrap();
        let mean = y.sum() / 3.0;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        // eps inside the normalizer keeps the variance just below 1
        assert!((var - 1.0).abs() < 1e-4, "{var}");
    }

    #[test]
    fn zero_mask_outputs_bias() {
        let mut net = Network::new(&[LayerSpec::masked(Array2::zeros((2, 3)), Activation::Identity)], 4).unwrap();
        if let Layer::Dense { bias, weight, .. } = &mut net.layers_mut()[0] {
            *bias = array![0.25, -1.5];
            weight.fill(3.0);
        }
        let y = net.predict(&array![[1.0, 2.0, 3.0], [-4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(y, array![[0.25, -1.5], [0.25, -1.5]]);
    }

    #[test]
    fn linear_gradient_is_the_input() {
        let mut net = Network::new(&[LayerSpec::dense(1, 1, Activation::Identity)], 0).unwrap();
        if let Layer::Dense { weight, .. } = &mut net.layers_mut()[0] {
            weight[[0, 0]] = 0.8;
        }
        let x = array![[2.5]];
        let (_, tape) = net.forward(&x, Mode::Train).unwrap();
        let g = net.backward(&tape, &array![[1.0]]).unwrap();
        assert_eq!(g.layers[0], LayerGrad::Dense { weight: array![[2.5]], bias: array![1.0] });
        assert_eq!(g.input, array![[0.8]]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let net = Network::new(
            &[
                LayerSpec::dense(3, 4, Activation::Tanh),
                LayerSpec::batch_norm(4),
                LayerSpec::dense(4, 2, Activation::Relu),
            ],
            1,
        )
        .unwrap();
        let x = array![[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 2.0, -0.3]];
        let (y, tape) = net.forward(&x, Mode::Train).unwrap();
        let g = net.backward(&tape, &Array2::zeros(y.dim())).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_is_invalidated_by_parameter_mutation() {
        let mut net = Network::new(&[LayerSpec::dense(2, 2, Activation::Tanh)], 0).unwrap();
        let x = array![[1.0, 2.0]];
        let (y, tape) = net.forward(&x, Mode::Train).unwrap();
        net.param_slices_mut()[0][0] += 0.1;
        assert!(matches!(net.backward(&tape, &y), Err(NnError::StaleTape)));
        let other = net.clone();
        let (y, tape) = net.forward(&x, Mode::Train).unwrap();
        assert!(matches!(other.backward(&tape, &y), Err(NnError::StaleTape)));
    }

    #[test]
    fn dimension_mismatch() {
        let net = Network::new(&[LayerSpec::dense(2, 2, Activation::Tanh)], 0).unwrap();
        assert!(matches!(
            net.forward(&Array2::zeros((1, 3)), Mode::Eval),
            Err(NnError::Dimension { expected: 2, found: 3 })
        ));
        assert!(Network::new(&[LayerSpec::dense(2, 3, Activation::Tanh), LayerSpec::dense(2, 1, Activation::Tanh)], 0)
            .is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let specs = [LayerSpec::dense(5, 7, Activation::Relu), LayerSpec::dense(7, 2, Activation::Identity)];
        assert_eq!(Network::new(&specs, 42).unwrap(), Network::new(&specs, 42).unwrap());
        assert_ne!(Network::new(&specs, 42).unwrap(), Network::new(&specs, 43).unwrap());
    }

    #[test]
    fn eval_batch_norm_is_frozen_affine() {
        let mut net = Network::new(&[LayerSpec::batch_norm(2)], 0).unwrap();
        let (_, tape) = net.forward(&array![[1.0, 5.0], [3.0, 9.0], [2.0, 4.0]], Mode::Train).unwrap();
        net.absorb_batch_stats(&tape);
        let a = net.predict(&array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let b = net.predict(&array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(a, b);
        // affine: second differences vanish
        for j in 0..2 {
            assert!((a[[2, j]] - 2.0 * a[[1, j]] + a[[0, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn blob_round_trip_is_exact() {
        let masks = crate::nn::made_masks(3, &[6], 2, crate::nn::Order::Natural, 2);
        let mut net = Network::new(
            &[
                LayerSpec::masked(masks[0].clone(), Activation::Tanh),
                LayerSpec::batch_norm(6),
                LayerSpec::masked(masks[1].clone(), Activation::Identity),
            ],
            17,
        )
        .unwrap();
        let (_, tape) = net.forward(&array![[0.1, 0.7, -0.2], [1.3, -0.4, 0.9]], Mode::Train).unwrap();
        net.absorb_batch_stats(&tape);
        let json = serde_json::to_string(&net.to_blob()).unwrap();
        let back = Network::from_blob(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, net);
        let mut blob = net.to_blob();
        blob.magic = "nope".into();
        assert!(Network::from_blob(&blob).is_err());
    }
}
