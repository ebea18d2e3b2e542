//! Novelty estimators. Every estimator is fitted on encoded in-distribution
//! rows and returns one score per row, oriented so that higher means more novel.

mod autoencoder;
mod config;
mod flow;
mod lof;
mod ppca;
pub(crate) mod training;
mod vae;

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use autoencoder::Autoencoder;
pub use config::{
    EstimatorConfig, EstimatorKind, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LOF_NEIGHBORS, DEFAULT_PATIENCE,
    DEFAULT_PPCA_COMPONENTS, DEFAULT_VAE_WARMUP,
};
pub use flow::{maf_log_prob, Flow, MafBlock, LOG_SCALE_CLAMP};
pub use lof::{lof_score, LofModel, MIN_REACH_DIST};
pub use ppca::{ppca_closed_form, sample_covariance, PpcaModel, NOISE_FLOOR};
pub use training::TrainSummary;
pub use vae::{beta_schedule, gaussian_kl, vae_loss, Vae, VaeLossParts, LOGVAR_CLAMP};

use crate::data::{EncodedMatrix, Encoding};
use crate::nn::{Network, NetworkBlob, NnError};

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("invalid estimator configuration: {0}")]
    Config(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { epoch: usize, what: String },
    #[error("width mismatch: estimator expects {expected} columns, got {found}")]
    Width { expected: usize, found: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("invalid estimator file: {0}")]
    Format(String),
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Ppca(PpcaModel),
    Lof(LofModel),
    Ae(Autoencoder),
    Vae(Vae),
    Maf(Flow),
}

/// A fitted estimator; immutable and safe to share across threads.
#[derive(Debug, Clone)]
pub struct FittedEstimator {
    pub config: EstimatorConfig,
    pub encoding: Arc<Encoding>,
    pub model: FittedModel,
    pub summary: Option<TrainSummary>,
}

/// Fits `config` on `train`; `val` drives early stopping and may be empty.
pub fn fit(config: &EstimatorConfig, train: &EncodedMatrix, val: &EncodedMatrix) -> Result<FittedEstimator, EstimatorError> {
    config.validate()?;
    if train.is_empty() {
        return Err(EstimatorError::Fit("training set is empty".into()));
    }
    let d = train.ncols();
    if !val.is_empty() && val.ncols() != d {
        return Err(EstimatorError::Width { expected: d, found: val.ncols() });
    }
    let x = &train.values;
    let v = &val.values;
    let (model, summary) = match &config.kind {
        EstimatorKind::Ppca { q } => {
            if *q >= d {
                return Err(EstimatorError::Config(format!("PPCA needs q < d, got q = {q}, d = {d}")));
            }
            (FittedModel::Ppca(ppca_closed_form(x, *q)?), None)
        }
        EstimatorKind::Lof { k } => (FittedModel::Lof(LofModel::fit(x, *k)?), None),
        EstimatorKind::Ae { hidden_dims, latent_dim, lr } => {
            let mut ae = Autoencoder::new(d, hidden_dims, *latent_dim, *lr, config.seed)?;
            let s = training::train(&mut ae, x, v, config)?;
            (FittedModel::Ae(ae), Some(s))
        }
        EstimatorKind::Vae { hidden_dims, latent_dim, lr, beta_warmup_epochs } => {
            let mut vae = Vae::new(d, hidden_dims, *latent_dim, *lr, *beta_warmup_epochs, config.seed)?;
            let s = training::train(&mut vae, x, v, config)?;
            (FittedModel::Vae(vae), Some(s))
        }
        EstimatorKind::Maf { n_layers, hidden_units, lr, batch_norm } => {
            let mut flow = Flow::new(d, *n_layers, *hidden_units, *batch_norm, *lr, config.seed)?;
            let s = training::train(&mut flow, x, v, config)?;
            (FittedModel::Maf(flow), Some(s))
        }
    };
    Ok(FittedEstimator { config: config.clone(), encoding: train.encoding.clone(), model, summary })
}

pub const ESTIMATOR_MAGIC: &str = "oodkit-estimator-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelParams {
    Ppca(ppca::PpcaParams),
    Lof { k: usize, reference: Vec<Vec<f64>> },
    Ae { network: NetworkBlob },
    Vae { encoder: NetworkBlob, decoder: NetworkBlob },
    Maf { dim: usize, blocks: Vec<FlowBlockBlob> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowBlockBlob {
    conditioner: NetworkBlob,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_norm: Option<NetworkBlob>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimatorFile {
    magic: String,
    config: EstimatorConfig,
    encoding: Encoding,
    params: ModelParams,
}

impl FittedEstimator {
    pub fn label(&self) -> &'static str {
        self.config.label()
    }

    pub fn dim(&self) -> usize {
        self.encoding.dim()
    }

    /// Novelty scores for already-encoded rows.
    pub fn score_matrix(&self, x: &Array2<f64>) -> Result<Array1<f64>, EstimatorError> {
        if x.ncols() != self.dim() {
            return Err(EstimatorError::Width { expected: self.dim(), found: x.ncols() });
        }
        if x.nrows() == 0 {
            return Ok(Array1::zeros(0));
        }
        let scores = match &self.model {
            FittedModel::Ppca(m) => -m.log_likelihood(x),
            FittedModel::Lof(m) => m.score(x),
            FittedModel::Ae(m) => m.score(x)?,
            FittedModel::Vae(m) => m.score(x)?,
            FittedModel::Maf(m) => -m.log_prob(x)?,
        };
        Ok(scores)
    }

    pub fn score(&self, x: &EncodedMatrix) -> Result<Array1<f64>, EstimatorError> {
        self.score_matrix(&x.values)
    }

    fn params(&self) -> ModelParams {
        match &self.model {
            FittedModel::Ppca(m) => ModelParams::Ppca(m.params()),
            FittedModel::Lof(m) => ModelParams::Lof {
                k: m.k(),
                reference: m.reference().outer_iter().map(|r| r.to_vec()).collect(),
            },
            FittedModel::Ae(m) => ModelParams::Ae { network: m.network().to_blob() },
            FittedModel::Vae(m) => ModelParams::Vae { encoder: m.encoder().to_blob(), decoder: m.decoder().to_blob() },
            FittedModel::Maf(f) => ModelParams::Maf {
                dim: f.dim(),
                blocks: f
                    .blocks()
                    .iter()
                    .map(|b| FlowBlockBlob {
                        conditioner: b.conditioner().to_blob(),
                        batch_norm: b.batch_norm().map(Network::to_blob),
                    })
                    .collect(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String, EstimatorError> {
        let file = EstimatorFile {
            magic: ESTIMATOR_MAGIC.into(),
            config: self.config.clone(),
            encoding: (*self.encoding).clone(),
            params: self.params(),
        };
        serde_json::to_string(&file).map_err(|e| EstimatorError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, EstimatorError> {
        let file: EstimatorFile = serde_json::from_str(text).map_err(|e| EstimatorError::Format(e.to_string()))?;
        if file.magic != ESTIMATOR_MAGIC {
            return Err(EstimatorError::Format(format!("bad magic '{}', expected '{ESTIMATOR_MAGIC}'", file.magic)));
        }
        let mismatch = || EstimatorError::Format("parameters do not match the configured estimator kind".into());
        let model = match (&file.config.kind, &file.params) {
            (EstimatorKind::Ppca { .. }, ModelParams::Ppca(p)) => FittedModel::Ppca(PpcaModel::from_params(p)?),
            (EstimatorKind::Lof { .. }, ModelParams::Lof { k, reference }) => {
                let d = file.encoding.dim();
                if reference.iter().any(|r| r.len() != d) {
                    return Err(EstimatorError::Format("LOF reference rows have the wrong width".into()));
                }
                let flat: Vec<f64> = reference.iter().flatten().copied().collect();
                let m = Array2::from_shape_vec((reference.len(), d), flat).map_err(|e| EstimatorError::Format(e.to_string()))?;
                FittedModel::Lof(LofModel::from_parts(m, *k)?)
            }
            (EstimatorKind::Ae { lr, .. }, ModelParams::Ae { network }) => {
                FittedModel::Ae(Autoencoder::from_network(Network::from_blob(network)?, *lr))
            }
            (EstimatorKind::Vae { lr, beta_warmup_epochs, .. }, ModelParams::Vae { encoder, decoder }) => {
                FittedModel::Vae(Vae::from_networks(
                    Network::from_blob(encoder)?,
                    Network::from_blob(decoder)?,
                    *lr,
                    *beta_warmup_epochs,
                ))
            }
            (EstimatorKind::Maf { lr, .. }, ModelParams::Maf { dim, blocks }) => {
                let blocks = blocks
                    .iter()
                    .map(|b| {
                        Ok((
                            Network::from_blob(&b.conditioner)?,
                            b.batch_norm.as_ref().map(Network::from_blob).transpose()?,
                        ))
                    })
                    .collect::<Result<Vec<_>, NnError>>()?;
                FittedModel::Maf(Flow::from_blocks(*dim, blocks, *lr)?)
            }
            _ => return Err(mismatch()),
        };
        let est = Self { config: file.config, encoding: Arc::new(file.encoding), model, summary: None };
        let width = match &est.model {
            FittedModel::Ppca(m) => m.dim(),
            FittedModel::Lof(m) => m.reference().ncols(),
            FittedModel::Ae(m) => m.network().in_dim(),
            FittedModel::Vae(m) => m.encoder().in_dim(),
            FittedModel::Maf(f) => f.dim(),
        };
        if width != est.dim() {
            return Err(EstimatorError::Width { expected: est.dim(), found: width });
        }
        Ok(est)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EstimatorError> {
        std::fs::write(path.as_ref(), self.to_json()?)
            .map_err(|e| EstimatorError::Format(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EstimatorError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EstimatorError::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}
