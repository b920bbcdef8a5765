//! Knowledge-graph diffusion for recommendation.
//!
//! A Gaussian diffusion model denoises each item's binary entity-adjacency
//! row; the denoised graph feeds a relation-aware aggregator and a light
//! graph convolution over user-item interactions, trained with BPR and a
//! contrastive objective between the original and the denoised views.

pub mod aggregator;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod diffusion;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod synth;
pub mod trainer;

pub use config::{HyperParams, Precision, RunConfig};
pub use data::Dataset;
pub use error::{ConfigError, Error, GraphError, Result};
pub use trainer::{EpochStats, Model};
