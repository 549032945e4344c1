//! Trapdoored classifier training, feature-signature detection, and the
//! attack ladder that evades it.
//!
//! The crate is organized around a small fixed-architecture MLP with exact
//! analytic gradients ([`nn`]), a deterministic synthetic image task plus
//! trapdoor construction ([`data`]), the signature detector ([`defense`]),
//! projected-gradient attacks against classifier and detector ([`attacks`]),
//! ROC/AUC evaluation ([`eval`]), and a file-driven experiment pipeline
//! ([`pipeline`]) used by the `trapnet` CLI.

pub mod artifacts;
pub mod attacks;
pub mod config;
pub mod data;
pub mod defense;
pub mod error;
pub mod eval;
pub mod idx;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor2D;
