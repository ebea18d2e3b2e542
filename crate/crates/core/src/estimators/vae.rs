use ndarray::{s, Array1, Array2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::autoencoder::{mlp_specs, row_mse};
use super::training::Trainable;
use super::EstimatorError;
use crate::nn::{AdamState, Mode, Network};
use crate::SeededRng;

/// Encoder log-variances are clamped to this range before exponentiation.
pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 10.0);

/// KL weight for `epoch` under a linear warm-up of `warmup_epochs`.
pub fn beta_schedule(epoch: usize, warmup_epochs: usize) -> f64 {
    if warmup_epochs == 0 {
        1.0
    } else {
        (epoch as f64 / warmup_epochs as f64).min(1.0)
    }
}

/// Batch-mean loss components, both per input feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLossParts {
    /// Mean squared reconstruction error.
    pub recon: f64,
    /// `KL(q(z|x) || N(0, I))` summed over latent dimensions, divided by the input width.
    pub kl: f64,
}

/// Closed-form `KL(N(mu, exp(logvar)) || N(0, 1))` summed over a row.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter().zip(logvar).map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv)).sum()
}

struct Pass {
    loss: f64,
    parts: VaeLossParts,
    enc_tape: crate::nn::Tape,
    dec_tape: crate::nn::Tape,
    mu: Array2<f64>,
    logvar: Array2<f64>,
    clamped: Array2<bool>,
    noise: Array2<f64>,
    recon_grad: Array2<f64>,
}

fn forward_pass(
    enc: &Network,
    dec: &Network,
    batch: &Array2<f64>,
    beta: f64,
    noise: &Array2<f64>,
) -> Result<Pass, EstimatorError> {
    let latent = enc.out_dim() / 2;
    let (h, enc_tape) = enc.forward(batch, Mode::Train)?;
    let mu = h.slice(s![.., ..latent]).to_owned();
    let raw = h.slice(s![.., latent..]);
    let clamped = raw.mapv(|v| !(LOGVAR_CLAMP.0..=LOGVAR_CLAMP.1).contains(&v));
    let logvar = raw.mapv(|v| v.clamp(LOGVAR_CLAMP.0, LOGVAR_CLAMP.1));
    if noise.dim() != mu.dim() {
        return Err(EstimatorError::Width { expected: latent, found: noise.ncols() });
    }
    let z = &mu + &(&logvar.mapv(|v| (0.5 * v).exp()) * noise);
    let (y, dec_tape) = dec.forward(&z, Mode::Train)?;
    let (n, d) = batch.dim();
    let diff = &y - batch;
    let recon = diff.iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
    let kl = mu
        .outer_iter()
        .zip(logvar.outer_iter())
        .map(|(m, lv)| gaussian_kl(m.as_slice().expect("row"), lv.as_slice().expect("row")))
        .sum::<f64>()
        / (n * d) as f64;
    let recon_grad = diff * (2.0 / (n * d) as f64);
    Ok(Pass {
        loss: recon + beta * kl,
        parts: VaeLossParts { recon, kl },
        enc_tape,
        dec_tape,
        mu,
        logvar,
        clamped,
        noise: noise.clone(),
        recon_grad,
    })
}

/// VAE objective on `batch` with reparameterized latent `mu + exp(logvar/2) * noise`.
/// With `beta = 0` the loss is the reconstruction MSE of that stochastic pass.
pub fn vae_loss(
    enc: &Network,
    dec: &Network,
    batch: &Array2<f64>,
    beta: f64,
    noise: &Array2<f64>,
) -> Result<(f64, VaeLossParts), EstimatorError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(EstimatorError::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    let p = forward_pass(enc, dec, batch, beta, noise)?;
    Ok((p.loss, p.parts))
}

#[derive(Debug, Clone)]
pub struct Vae {
    encoder: Network,
    decoder: Network,
    enc_adam: AdamState,
    dec_adam: AdamState,
    warmup: usize,
}

impl Vae {
    pub fn new(
        in_dim: usize,
        hidden: &[usize],
        latent: usize,
        lr: f64,
        warmup: usize,
        seed: u64,
    ) -> Result<Self, EstimatorError> {
        let encoder = Network::new(&mlp_specs(in_dim, hidden, 2 * latent), seed)?;
        let rev: Vec<usize> = hidden.iter().rev().copied().collect();
        let decoder = Network::new(&mlp_specs(latent, &rev, in_dim), seed.wrapping_add(1))?;
        Ok(Self::from_networks(encoder, decoder, lr, warmup))
    }

    pub(crate) fn from_networks(encoder: Network, decoder: Network, lr: f64, warmup: usize) -> Self {
        Self { encoder, decoder, enc_adam: AdamState::new(lr), dec_adam: AdamState::new(lr), warmup }
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim() / 2
    }

    /// Reconstruction MSE per row, decoding the encoder mean.
    pub fn score(&self, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
        let h = self.encoder.predict(x)?;
        let mu = h.slice(s![.., ..self.latent_dim()]).to_owned();
        Ok(row_mse(x, &self.decoder.predict(&mu)?))
    }
}

impl Trainable for Vae {
    fn train_batch(&mut self, batch: &Array2<f64>, epoch: usize, rng: &mut SeededRng) -> Result<f64, EstimatorError> {
        let beta = beta_schedule(epoch, self.warmup);
        let noise = Array2::from_shape_fn((batch.nrows(), self.latent_dim()), |_| StandardNormal.sample(&mut *rng));
        let p = forward_pass(&self.encoder, &self.decoder, batch, beta, &noise)?;
        let dec_grads = self.decoder.backward(&p.dec_tape, &p.recon_grad)?;
        let dz = &dec_grads.input;

        let kl_scale = beta / batch.len() as f64;
        let sigma = p.logvar.mapv(|v| (0.5 * v).exp());
        let dmu = dz + &(&p.mu * kl_scale);
        let mut dlogvar = dz * &p.noise * &sigma * 0.5 + &(p.logvar.mapv(f64::exp) - 1.0) * (0.5 * kl_scale);
        dlogvar.zip_mut_with(&p.clamped, |g, &c| {
            if c {
                *g = 0.0
            }
        });
        let enc_out_grad = ndarray::concatenate(Axis(1), &[dmu.view(), dlogvar.view()]).expect("same rows");
        let enc_grads = self.encoder.backward(&p.enc_tape, &enc_out_grad)?;

        self.dec_adam.step(&mut self.decoder.param_slices_mut(), &dec_grads.slices())?;
        self.enc_adam.step(&mut self.encoder.param_slices_mut(), &enc_grads.slices())?;
        Ok(p.loss)
    }

    /// Full-weight objective with the latent fixed at the encoder mean.
    fn validation_loss(&self, val: &Array2<f64>) -> Result<f64, EstimatorError> {
        let noise = Array2::zeros((val.nrows(), self.latent_dim()));
        Ok(forward_pass(&self.encoder, &self.decoder, val, 1.0, &noise)?.loss)
    }

    fn min_epochs(&self) -> usize {
        self.warmup
    }
}
