//! Clamped restricted Boltzmann machine classification of two-class
//! expression data.
//!
//! The crate covers the whole workflow: feature scoring and binarization
//! ([`features`]), the energy model and its samplers ([`sampler`]), chimera
//! topology and QUBO embedding ([`chimera`]), contrastive training and
//! clamp-based inference ([`rbm`]), the hyperparameter sweep ([`pipeline`]),
//! dataset IO and synthetic generation ([`data`]) and the command-line front
//! end ([`cli`]).

pub mod chimera;
pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod rbm;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
