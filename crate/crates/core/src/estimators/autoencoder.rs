use ndarray::{Array1, Array2, Axis};

use super::training::Trainable;
use super::EstimatorError;
use crate::nn::{Activation, AdamState, LayerSpec, Mode, Network};
use crate::SeededRng;

/// Dense layers `in -> hidden... -> out`, ReLU between, identity at the end.
pub(crate) fn mlp_specs(in_dim: usize, hidden: &[usize], out_dim: usize) -> Vec<LayerSpec> {
    let mut dims = vec![in_dim];
    dims.extend_from_slice(hidden);
    dims.push(out_dim);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() { Activation::Identity } else { Activation::Relu };
            LayerSpec::dense(w[0], w[1], act)
        })
        .collect()
}

/// Per-row mean squared difference.
pub(crate) fn row_mse(x: &Array2<f64>, y: &Array2<f64>) -> Array1<f64> {
    let diff = y - x;
    (&diff * &diff).mean_axis(Axis(1)).expect("non-empty width")
}

/// Encoder and mirrored decoder as one network.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    net: Network,
    adam: AdamState,
}

impl Autoencoder {
    pub fn new(in_dim: usize, hidden: &[usize], latent: usize, lr: f64, seed: u64) -> Result<Self, EstimatorError> {
        let mut layer_dims: Vec<usize> = hidden.to_vec();
        layer_dims.push(latent);
        layer_dims.extend(hidden.iter().rev());
        let net = Network::new(&mlp_specs(in_dim, &layer_dims, in_dim), seed)?;
        Ok(Self::from_network(net, lr))
    }

    pub(crate) fn from_network(net: Network, lr: f64) -> Self {
        Self { net, adam: AdamState::new(lr) }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Mean squared reconstruction error per row.
    pub fn score(&self, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
        Ok(row_mse(x, &self.net.predict(x)?))
    }
}

impl Trainable for Autoencoder {
    fn train_batch(&mut self, batch: &Array2<f64>, _epoch: usize, _rng: &mut SeededRng) -> Result<f64, EstimatorError> {
        let (y, tape) = self.net.forward(batch, Mode::Train)?;
        let diff = &y - batch;
        let scale = 2.0 / diff.len() as f64;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64;
        let grads = self.net.backward(&tape, &(&diff * scale))?;
        self.adam.step(&mut self.net.param_slices_mut(), &grads.slices())?;
        Ok(loss)
    }

    fn validation_loss(&self, val: &Array2<f64>) -> Result<f64, EstimatorError> {
        Ok(self.score(val)?.mean().unwrap_or(0.0))
    }
}
