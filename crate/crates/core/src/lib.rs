//! Next-POI recommendation with context-adaptive graph attention, a
//! Transformer sequence encoder, and KL alignment between the two.
//!
//! The numerical core is generic over [`tensor::Scalar`]; the aliases at the
//! crate root fix it to `f64`, which is what training and the CLI use.

pub mod align;
pub mod analysis;
pub mod cli;
pub mod graph_encoder;
pub mod ingest;
pub mod seq_encoder;
pub mod tensor;
pub mod train;

pub use tensor::{Scalar, Tensor};

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape64 = tensor::Tape<f64>;
pub type ParamStore64 = tensor::ParamStore<f64>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
