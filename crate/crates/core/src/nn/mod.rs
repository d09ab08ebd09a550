//! Small feed-forward networks with hand-written backpropagation and Adam.

mod adam;
pub mod checkpoint;
mod mlp;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, ForwardCache, Gradients, Head, Mlp};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("forward cache does not belong to this network")]
    CacheMismatch,
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
