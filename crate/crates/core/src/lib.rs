//! Persona-conditioned dialogue with a small causal transformer.
//!
//! The pipeline: a BPE [`tokenizer`], a reverse-mode [`autodiff`] engine, the
//! transformer [`model`], the dialog [`input`] builder, multi-task
//! [`trainer`], beam-search [`decoder`], [`evaluator`] metrics, and
//! dataset/checkpoint persistence in [`data`] and [`checkpoint`].
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used for training (`f32`) and gradient checks (`f64`).

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod input;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod scoring;
pub mod synthetic;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Params32 = model::ModelParams<f32>;
pub type Params64 = model::ModelParams<f64>;
pub type Checkpoint32 = checkpoint::Checkpoint<f32>;

