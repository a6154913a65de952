//! Graph-neural-network downlink precoding for cell-free massive MIMO.
//!
//! The crate covers the full desk-scale pipeline: synthetic channel
//! generation ([`channel`]), closed-form baselines and rate metrics
//! ([`precoders`]), the edge-centric GNN precoder ([`gnn`]), unsupervised
//! training and layer-freezing fine-tuning ([`training`]), measured/synthetic
//! dataset handling ([`dataset`]), and config-driven experiments
//! ([`experiment`]).

pub mod channel;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gnn;
pub mod precoders;
pub mod training;

pub use error::{Error, Result};
