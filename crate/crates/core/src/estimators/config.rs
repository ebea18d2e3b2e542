use serde::{Deserialize, Serialize};

use super::EstimatorError;

pub const DEFAULT_PPCA_COMPONENTS: usize = 19;
pub const DEFAULT_LOF_NEIGHBORS: usize = 5;
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_PATIENCE: usize = 5;
pub const DEFAULT_VAE_WARMUP: usize = 10;

fn ppca_q() -> usize {
    DEFAULT_PPCA_COMPONENTS
}
fn lof_k() -> usize {
    DEFAULT_LOF_NEIGHBORS
}
fn ae_hidden() -> Vec<usize> {
    vec![75]
}
fn ae_latent() -> usize {
    20
}
fn ae_lr() -> f64 {
    0.007
}
fn vae_hidden() -> Vec<usize> {
    vec![25, 25, 25]
}
fn vae_latent() -> usize {
    10
}
fn vae_lr() -> f64 {
    0.001
}
fn vae_warmup() -> usize {
    DEFAULT_VAE_WARMUP
}
fn maf_layers() -> usize {
    20
}
fn maf_hidden() -> usize {
    256
}
fn maf_lr() -> f64 {
    0.001
}
fn yes() -> bool {
    true
}
fn epochs() -> usize {
    DEFAULT_EPOCHS
}
fn batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn patience() -> usize {
    DEFAULT_PATIENCE
}

/// Model family and its hyperparameters. Omitted fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorKind {
    Ppca {
        #[serde(default = "ppca_q")]
        q: usize,
    },
    Lof {
        #[serde(default = "lof_k")]
        k: usize,
    },
    Ae {
        #[serde(default = "ae_hidden")]
        hidden_dims: Vec<usize>,
        #[serde(default = "ae_latent")]
        latent_dim: usize,
        #[serde(default = "ae_lr")]
        lr: f64,
    },
    Vae {
        #[serde(default = "vae_hidden")]
        hidden_dims: Vec<usize>,
        #[serde(default = "vae_latent")]
        latent_dim: usize,
        #[serde(default = "vae_lr")]
        lr: f64,
        #[serde(default = "vae_warmup")]
        beta_warmup_epochs: usize,
    },
    /// Masked autoregressive flow.
    Maf {
        #[serde(default = "maf_layers")]
        n_layers: usize,
        #[serde(default = "maf_hidden")]
        hidden_units: usize,
        #[serde(default = "maf_lr")]
        lr: f64,
        #[serde(default = "yes")]
        batch_norm: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(flatten)]
    pub kind: EstimatorKind,
    #[serde(default = "epochs")]
    pub epochs: usize,
    #[serde(default = "batch_size")]
    pub batch_size: usize,
    /// Early-stopping patience in epochs on validation loss.
    #[serde(default = "patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, epochs: DEFAULT_EPOCHS, batch_size: DEFAULT_BATCH_SIZE, patience: DEFAULT_PATIENCE, seed: 0 }
    }

    pub fn ppca() -> Self {
        Self::new(EstimatorKind::Ppca { q: ppca_q() })
    }

    pub fn lof() -> Self {
        Self::new(EstimatorKind::Lof { k: lof_k() })
    }

    pub fn ae() -> Self {
        Self::new(EstimatorKind::Ae { hidden_dims: ae_hidden(), latent_dim: ae_latent(), lr: ae_lr() })
    }

    pub fn vae() -> Self {
        Self::new(EstimatorKind::Vae {
            hidden_dims: vae_hidden(),
            latent_dim: vae_latent(),
            lr: vae_lr(),
            beta_warmup_epochs: vae_warmup(),
        })
    }

    pub fn maf() -> Self {
        Self::new(EstimatorKind::Maf { n_layers: maf_layers(), hidden_units: maf_hidden(), lr: maf_lr(), batch_norm: true })
    }

    /// All five estimators with default hyperparameters.
    pub fn all_defaults() -> Vec<Self> {
        vec![Self::ae(), Self::vae(), Self::ppca(), Self::maf(), Self::lof()]
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    /// Row label used in reports, e.g. `PPCA`.
    pub fn label(&self) -> &'static str {
        match self.kind {
            EstimatorKind::Ppca { .. } => "PPCA",
            EstimatorKind::Lof { .. } => "LOF",
            EstimatorKind::Ae { .. } => "AE",
            EstimatorKind::Vae { .. } => "VAE",
            EstimatorKind::Maf { .. } => "Flow",
        }
    }

    /// Name of the novelty metric.
    pub fn metric(&self) -> &'static str {
        match self.kind {
            EstimatorKind::Ppca { .. } | EstimatorKind::Maf { .. } => "log_prob",
            EstimatorKind::Lof { .. } => "outlier_score",
            EstimatorKind::Ae { .. } | EstimatorKind::Vae { .. } => "reconstr_err",
        }
    }

    /// True for estimators whose fit does not depend on the seed.
    pub fn is_deterministic(&self) -> bool {
        matches!(self.kind, EstimatorKind::Ppca { .. } | EstimatorKind::Lof { .. })
    }

    /// True for estimators that reduce dimensionality by construction.
    pub fn reduces_dimension(&self) -> bool {
        matches!(self.kind, EstimatorKind::Ppca { .. } | EstimatorKind::Ae { .. } | EstimatorKind::Vae { .. })
    }

    /// Checks that do not depend on the data.
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: String| Err(EstimatorError::Config(m));
        let check_lr = |lr: f64| if lr.is_finite() && lr > 0.0 { Ok(()) } else { bad(format!("learning rate must be positive, got {lr}")) };
        match &self.kind {
            EstimatorKind::Ppca { q } if *q < 1 => return bad("PPCA needs q >= 1".into()),
            EstimatorKind::Lof { k } if *k < 1 => return bad("LOF needs k >= 1".into()),
            EstimatorKind::Ae { hidden_dims, latent_dim, lr } | EstimatorKind::Vae { hidden_dims, latent_dim, lr, .. } => {
                if *latent_dim < 1 || hidden_dims.iter().any(|&h| h < 1) {
                    return bad("network dimensions must be at least 1".into());
                }
                check_lr(*lr)?;
            }
            EstimatorKind::Maf { n_layers, hidden_units, lr, .. } => {
                if *n_layers < 1 || *hidden_units < 1 {
                    return bad("flow needs at least one layer and one hidden unit".into());
                }
                check_lr(*lr)?;
            }
            _ => {}
        }
        if !matches!(self.kind, EstimatorKind::Ppca { .. } | EstimatorKind::Lof { .. })
            && (self.batch_size < 1 || self.epochs < 1)
        {
            return bad("epochs and batch_size must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_hyperparameters() {
        assert_eq!(EstimatorConfig::ppca().kind, EstimatorKind::Ppca { q: 19 });
        assert_eq!(EstimatorConfig::lof().kind, EstimatorKind::Lof { k: 5 });
        assert_eq!(
            EstimatorConfig::maf().kind,
            EstimatorKind::Maf { n_layers: 20, hidden_units: 256, lr: 0.001, batch_norm: true }
        );
        assert_eq!(EstimatorConfig::ae().kind, EstimatorKind::Ae { hidden_dims: vec![75], latent_dim: 20, lr: 0.007 });
        match EstimatorConfig::vae().kind {
            EstimatorKind::Vae { hidden_dims, latent_dim, lr, .. } => {
                assert_eq!((hidden_dims, latent_dim, lr), (vec![25, 25, 25], 10, 0.001));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn json_fills_defaults_and_round_trips() {
        let c: EstimatorConfig = serde_json::from_str(r#"{"kind":"maf","n_layers":3}"#).unwrap();
        assert_eq!(c.kind, EstimatorKind::Maf { n_layers: 3, hidden_units: 256, lr: 0.001, batch_norm: true });
        assert_eq!((c.epochs, c.batch_size, c.patience, c.seed), (30, 64, 5, 0));
        for cfg in EstimatorConfig::all_defaults() {
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(serde_json::from_str::<EstimatorConfig>(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn validation() {
        assert!(EstimatorConfig::new(EstimatorKind::Lof { k: 0 }).validate().is_err());
        assert!(EstimatorConfig::new(EstimatorKind::Ae { hidden_dims: vec![4], latent_dim: 2, lr: 0.0 }).validate().is_err());
        assert!(EstimatorConfig::maf().with_epochs(0).validate().is_err());
        assert!(EstimatorConfig::ppca().validate().is_ok());
    }
}
