//! Class-rebalancing augmentation for multi-relational interaction graphs.
//!
//! The pipeline has three stages:
//!
//! 1. [`vgae`]: fit a variational graph autoencoder (relational graph
//!    convolution encoder, DistMult decoder) on the imbalanced training graph.
//! 2. [`gflownet`]: train a three-step generative flow network with the
//!    trajectory balance objective so that it samples `(type, drug, drug)`
//!    triples in proportion to a rareness-times-plausibility reward
//!    ([`augment::reward`]).
//! 3. [`augment`]: sample synthetic triples, merge them into the training
//!    graph and retrain the autoencoder.
//!
//! [`metrics`] scores both models and the type distributions before and
//! after augmentation. [`pipeline`] wires the stages together on disk.

pub mod augment;
pub mod error;
pub mod gflownet;
pub mod graph;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod vgae;

pub use error::{Error, Result};
