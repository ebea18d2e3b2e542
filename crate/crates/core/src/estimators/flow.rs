//! Masked autoregressive flow.
//!
//! Each block maps `x -> u` with `u_i = (x_i - m_i(x_<i)) * exp(-a_i(x_<i))`,
//! where `(m, a)` come from a MADE conditioner, optionally followed by batch
//! normalization. Consecutive blocks are separated by a reversal of the
//! feature order. The final `u` is modelled as a standard normal.

use std::f64::consts::PI;

use ndarray::{s, Array1, Array2, Axis};

use super::training::Trainable;
use super::EstimatorError;
use crate::nn::{
    made_masks, Activation, AdamState, Layer, LayerSpec, Mode, Network, Order, Tape, BATCH_NORM_EPS,
};
use crate::SeededRng;

/// Conditioner log-scales are clamped to `[-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP]`.
pub const LOG_SCALE_CLAMP: f64 = 7.0;

#[derive(Debug, Clone)]
pub struct MafBlock {
    conditioner: Network,
    batch_norm: Option<Network>,
}

impl MafBlock {
    pub fn conditioner(&self) -> &Network {
        &self.conditioner
    }

    pub fn batch_norm(&self) -> Option<&Network> {
        self.batch_norm.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct Flow {
    dim: usize,
    blocks: Vec<MafBlock>,
    adam: AdamState,
}

struct BlockCache {
    cond_tape: Tape,
    u: Array2<f64>,
    a: Array2<f64>,
    a_clamped: Array2<bool>,
    bn_tape: Option<Tape>,
}

fn reverse_columns(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![.., ..;-1]).as_standard_layout().into_owned()
}

fn split_heads(out: &Array2<f64>, d: usize) -> (Array2<f64>, Array2<f64>, Array2<bool>) {
    let m = out.slice(s![.., ..d]).to_owned();
    let raw = out.slice(s![.., d..]);
    let clamped = raw.mapv(|v| v.abs() > LOG_SCALE_CLAMP);
    let a = raw.mapv(|v| v.clamp(-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP));
    (m, a, clamped)
}

fn batch_norm_params(bn: &Network) -> (&Array1<f64>, &Array1<f64>, &Array1<f64>, &Array1<f64>) {
    match &bn.layers()[0] {
        Layer::BatchNorm { log_scale, offset, running_mean, running_var } => (log_scale, offset, running_mean, running_var),
        Layer::Dense { .. } => unreachable!("flow batch-norm network holds one batch-norm layer"),
    }
}

fn standard_normal_log_density(z: &Array2<f64>) -> Array1<f64> {
    let d = z.ncols() as f64;
    z.map_axis(Axis(1), |row| -0.5 * (d * (2.0 * PI).ln() + row.dot(&row)))
}

impl Flow {
    pub fn new(
        dim: usize,
        n_layers: usize,
        hidden: usize,
        batch_norm: bool,
        lr: f64,
        seed: u64,
    ) -> Result<Self, EstimatorError> {
        if dim == 0 || n_layers == 0 || hidden == 0 {
            return Err(EstimatorError::Config("flow dimensions must be at least 1".into()));
        }
        let mut blocks = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let block_seed = seed.wrapping_add(l as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let masks = made_masks(dim, &[hidden, hidden], 2, Order::Natural, block_seed);
            let specs = [
                LayerSpec::masked(masks[0].clone(), Activation::Tanh),
                LayerSpec::masked(masks[1].clone(), Activation::Tanh),
                LayerSpec::masked(masks[2].clone(), Activation::Identity),
            ];
            let mut conditioner = Network::new(&specs, block_seed)?;
            // Start every block at the identity map.
            if let Some(Layer::Dense { weight, bias, .. }) = conditioner.layers_mut().last_mut() {
                weight.fill(0.0);
                bias.fill(0.0);
            }
            let batch_norm = if batch_norm { Some(Network::new(&[LayerSpec::batch_norm(dim)], block_seed)?) } else { None };
            blocks.push(MafBlock { conditioner, batch_norm });
        }
        Ok(Self { dim, blocks, adam: AdamState::new(lr) })
    }

    /// A flow whose eval-mode transform is exactly the identity.
    pub fn identity(dim: usize, n_layers: usize, hidden: usize, batch_norm: bool, seed: u64) -> Result<Self, EstimatorError> {
        let mut flow = Self::new(dim, n_layers, hidden, batch_norm, 1e-3, seed)?;
        for block in &mut flow.blocks {
            if let Some(bn) = &mut block.batch_norm {
                if let Layer::BatchNorm { running_var, .. } = &mut bn.layers_mut()[0] {
                    running_var.fill(1.0 - BATCH_NORM_EPS);
                }
            }
        }
        Ok(flow)
    }

    pub(crate) fn from_blocks(dim: usize, blocks: Vec<(Network, Option<Network>)>, lr: f64) -> Result<Self, EstimatorError> {
        if blocks.is_empty() {
            return Err(EstimatorError::Format("flow has no blocks".into()));
        }
        for (cond, bn) in &blocks {
            if cond.in_dim() != dim || cond.out_dim() != 2 * dim || bn.as_ref().is_some_and(|b| b.in_dim() != dim) {
                return Err(EstimatorError::Format("flow block dimensions are inconsistent".into()));
            }
        }
        let blocks = blocks.into_iter().map(|(conditioner, batch_norm)| MafBlock { conditioner, batch_norm }).collect();
        Ok(Self { dim, blocks, adam: AdamState::new(lr) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[MafBlock] {
        &self.blocks
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<(), EstimatorError> {
        if x.ncols() != self.dim {
            return Err(EstimatorError::Width { expected: self.dim, found: x.ncols() });
        }
        Ok(())
    }

    /// Eval-mode map to the base space with the per-row log|det J|.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>), EstimatorError> {
        self.check_width(x)?;
        let d = self.dim;
        let mut h = x.to_owned();
        let mut log_det = Array1::zeros(x.nrows());
        for (l, block) in self.blocks.iter().enumerate() {
            if l > 0 {
                h = reverse_columns(&h);
            }
            let (m, a, _) = split_heads(&block.conditioner.predict(&h)?, d);
            h = (&h - &m) * &a.mapv(|v| (-v).exp());
            log_det -= &a.sum_axis(Axis(1));
            if let Some(bn) = &block.batch_norm {
                let (log_scale, _, _, running_var) = batch_norm_params(bn);
                let bn_log_det: f64 =
                    log_scale.iter().zip(running_var).map(|(ls, v)| ls - 0.5 * (v + BATCH_NORM_EPS).ln()).sum();
                log_det += bn_log_det;
                h = bn.predict(&h)?;
            }
        }
        Ok((h, log_det))
    }

    /// Eval-mode log-density of each row.
    pub fn log_prob(&self, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
        let (z, log_det) = self.forward(x)?;
        Ok(standard_normal_log_density(&z) + log_det)
    }

    /// Inverse of [`Flow::forward`], one autoregressive pass per feature and block.
    pub fn inverse(&self, z: &Array2<f64>) -> Result<Array2<f64>, EstimatorError> {
        self.check_width(z)?;
        let d = self.dim;
        let mut y = z.to_owned();
        for (l, block) in self.blocks.iter().enumerate().rev() {
            if let Some(bn) = &block.batch_norm {
                let (log_scale, offset, running_mean, running_var) = batch_norm_params(bn);
                let std = running_var.mapv(|v| (v + BATCH_NORM_EPS).sqrt());
                y = (&y - offset) * &log_scale.mapv(|v| (-v).exp()) * &std + running_mean;
            }
            let mut h = Array2::zeros(y.dim());
            for i in 0..d {
                let (m, a, _) = split_heads(&block.conditioner.predict(&h)?, d);
                for r in 0..y.nrows() {
                    h[[r, i]] = y[[r, i]] * a[[r, i]].exp() + m[[r, i]];
                }
            }
            y = if l > 0 { reverse_columns(&h) } else { h };
        }
        Ok(y)
    }

    /// Train-mode negative mean log-likelihood and its gradients, in the
    /// parameter order of [`Flow::param_slices_mut`].
    fn loss_and_gradients(&self, batch: &Array2<f64>) -> Result<(f64, Vec<Vec<f64>>, Vec<Option<Tape>>), EstimatorError> {
        self.check_width(batch)?;
        let (n, d) = batch.dim();
        let nf = n as f64;
        let mut h = batch.to_owned();
        let mut log_det = Array1::<f64>::zeros(n);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (l, block) in self.blocks.iter().enumerate() {
            if l > 0 {
                h = reverse_columns(&h);
            }
            let (out, cond_tape) = block.conditioner.forward(&h, Mode::Train)?;
            let (m, a, a_clamped) = split_heads(&out, d);
            let u = (&h - &m) * &a.mapv(|v| (-v).exp());
            log_det -= &a.sum_axis(Axis(1));
            let bn_tape = match &block.batch_norm {
                Some(bn) => {
                    let (y, tape) = bn.forward(&u, Mode::Train)?;
                    let (log_scale, ..) = batch_norm_params(bn);
                    let var = u.var_axis(Axis(0), 0.0);
                    log_det += log_scale.iter().zip(&var).map(|(ls, v)| ls - 0.5 * (v + BATCH_NORM_EPS).ln()).sum::<f64>();
                    h = y;
                    Some(tape)
                }
                None => {
                    h = u.clone();
                    None
                }
            };
            caches.push(BlockCache { cond_tape, u, a, a_clamped, bn_tape });
        }
        let loss = -(standard_normal_log_density(&h) + &log_det).mean().expect("non-empty batch");

        let mut g = &h / nf;
        let mut per_block = Vec::with_capacity(self.blocks.len());
        for (l, (block, cache)) in self.blocks.iter().zip(&caches).enumerate().rev() {
            let mut bn_slices = Vec::new();
            if let (Some(bn), Some(tape)) = (&block.batch_norm, &cache.bn_tape) {
                let grads = bn.backward(tape, &g)?;
                let mut slices: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
                // log|det| of batch norm: sum(log_scale) - 0.5 sum(ln(var + eps)).
                for v in slices[0].iter_mut() {
                    *v -= 1.0;
                }
                let mean = cache.u.mean_axis(Axis(0)).expect("non-empty batch");
                let var = cache.u.var_axis(Axis(0), 0.0);
                let denom = var.mapv(|v| nf * (v + BATCH_NORM_EPS));
                g = grads.input + &((&cache.u - &mean) / &denom);
                bn_slices = slices;
            }
            let exp_neg_a = cache.a.mapv(|v| (-v).exp());
            let direct = &g * &exp_neg_a;
            let dm = -&direct;
            let mut da = -(&g * &cache.u) + 1.0 / nf;
            da.zip_mut_with(&cache.a_clamped, |v, &c| {
                if c {
                    *v = 0.0
                }
            });
            let cond_out_grad = ndarray::concatenate(Axis(1), &[dm.view(), da.view()]).expect("same rows");
            let cond_grads = block.conditioner.backward(&cache.cond_tape, &cond_out_grad)?;
            g = direct + &cond_grads.input;
            if l > 0 {
                g = reverse_columns(&g);
            }
            let mut slices: Vec<Vec<f64>> = cond_grads.slices().iter().map(|s| s.to_vec()).collect();
            slices.extend(bn_slices);
            per_block.push(slices);
        }
        per_block.reverse();
        let tapes = caches.into_iter().map(|c| c.bn_tape).collect();
        Ok((loss, per_block.into_iter().flatten().collect(), tapes))
    }

    fn param_slices_mut(blocks: &mut [MafBlock]) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for block in blocks {
            out.extend(block.conditioner.param_slices_mut());
            if let Some(bn) = &mut block.batch_norm {
                out.extend(bn.param_slices_mut());
            }
        }
        out
    }
}

/// Per-row log-probability under `flow` in eval mode.
pub fn maf_log_prob(flow: &Flow, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
    flow.log_prob(x)
}

impl Trainable for Flow {
    fn train_batch(&mut self, batch: &Array2<f64>, _epoch: usize, _rng: &mut SeededRng) -> Result<f64, EstimatorError> {
        let (loss, grads, tapes) = self.loss_and_gradients(batch)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        for (block, tape) in self.blocks.iter_mut().zip(&tapes) {
            if let (Some(bn), Some(tape)) = (&mut block.batch_norm, tape) {
                bn.absorb_batch_stats(tape);
            }
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let Flow { blocks, adam, .. } = self;
        adam.step(&mut Self::param_slices_mut(blocks), &grad_refs)?;
        Ok(loss)
    }

    fn validation_loss(&self, val: &Array2<f64>) -> Result<f64, EstimatorError> {
        Ok(-self.log_prob(val)?.mean().unwrap_or(0.0))
    }
}
