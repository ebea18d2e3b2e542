//! Minimal sequential neural-network core shared by the AE, VAE and flow
//! estimators: dense / masked-dense / batch-norm layers, a tape-based reverse
//! pass, Adam, and MADE mask construction.

mod adam;
mod layer;
mod made;
mod network;

pub use adam::AdamState;
pub use layer::{Activation, Layer, LayerKind, LayerSpec, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
pub use made::{input_degrees, made_masks, Order};
pub use network::{Gradients, LayerBlob, LayerGrad, Mode, Network, NetworkBlob, Tape, NETWORK_MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("invalid layer specification: {0}")]
    Spec(String),
    #[error("dimension mismatch: expected width {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("tape does not match the current network parameters")]
    StaleTape,
    #[error("invalid network blob: {0}")]
    Format(String),
}
