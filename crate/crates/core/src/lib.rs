//! Counterfactual explanations for hypergraph convolutional node classifiers.
//!
//! The crate trains a hypergraph convolutional network on a node
//! classification task and searches for minimal edits to the incidence
//! structure that change a node's prediction. Two edit granularities are
//! supported: removing the target node from some of its hyperedges
//! ([`MaskVariant::Nhp`]) and deleting whole hyperedges around the target
//! ([`MaskVariant::Hp`]).

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod diffmath;
pub mod error;
pub mod explainer;
pub mod hypergraph;
pub mod metrics;
pub mod model;
pub mod record;
pub mod runner;
pub mod seed;

pub use error::{Error, Result};
pub use explainer::{explain, CounterfactualResult, ExplainConfig, MaskVariant, Removal};

pub use hypergraph::{Hypergraph, SimpleGraph, SubHypergraphView};
pub use model::{ModelParams, NodeFeatures, Split, TrainConfig};
