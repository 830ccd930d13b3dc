//! Relation-dependent neighborhood sampling for relational graph
//! convolutional networks.
//!
//! The crate covers the whole pipeline at desk scale: multi-relational graph
//! storage ([`graph`]), per-hop edge-type sampling with exact
//! log-probabilities ([`sampler`]), a small reverse-mode engine
//! ([`autodiff`]), the R-GCN encoder family with DistMult/DEDICOM decoders
//! ([`model`]), REINFORCE-coupled training ([`train`]) and exact ranking
//! metrics ([`metrics`]). The [`experiment`] module holds the runners behind
//! the `relsamp` command line tool.

pub mod autodiff;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod sampler;
pub mod train;

pub use graph::{Edge, EdgeSplit, Features, MultiRelGraph};
pub use sampler::{RelationLogits, SamplePlan, SampledSubgraph, SamplerMode};
