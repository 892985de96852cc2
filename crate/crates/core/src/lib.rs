//! Pre-training toolkit for graph neural networks on attributed graphs.
//!
//! The crate is organized around a small set of subsystems:
//!
//! - [`graph`]: attributed-graph data model and subgraph extraction
//!   (K-hop neighborhoods, context rings, ego-network sampling);
//! - [`chem`]: SMILES ingestion, Bemis-Murcko scaffolds, canonical keys;
//! - [`num`]: dense tensors, reverse-mode autodiff, Adam, gradient checks;
//! - [`gnn`]: GIN/GCN/GraphSAGE encoders with edge features and readouts;
//! - [`pretrain`]: context prediction, attribute masking, edge prediction,
//!   and supervised multi-task objectives;
//! - [`traineval`]: training loops, ROC-AUC, early stopping, curves;
//! - [`data`]: dataset formats, splits, synthetic benchmarks, checkpoints;
//! - [`cli`]: run configuration and the machinery behind the `pregraph` binary.

pub mod chem;
pub mod cli;
pub mod data;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod num;
pub mod pretrain;
pub mod traineval;

pub use error::{Error, Result};
