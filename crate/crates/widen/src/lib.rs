//! Wide-and-deep attentive message passing on heterogeneous graphs.
//!
//! The crate ingests typed node/edge lists, samples wide (first-order) and
//! deep (random-walk) neighbor sets per node, runs masked attentive message
//! passing over heterogeneous message packs, trains a semi-supervised node
//! classifier, and progressively downsamples neighbor sets during training
//! using a KL-divergence trigger with contextualized relay edges.

pub mod checkpoint;
pub mod downsample;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod numeric;
mod parallel;
mod rng;
pub mod sampler;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{evaluate_inductive, evaluate_transductive, export_embeddings, micro_f1, EvalResult};
pub use graph::{GraphBuilder, HeteroGraph, NodeRecord, SplitFractions, SplitTag};
pub use model::{Ablation, DeepValues, ForwardOptions, ModelDims, ModelParams, ParamKey};
pub use numeric::{Matrix, Tape, Var};
pub use sampler::{DeepWalk, NeighborCache, WideSet};
pub use trainer::{train, Optimizer, TrainConfig, TrainReport};
