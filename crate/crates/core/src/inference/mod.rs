//! Gradual inference over the factor graph.

pub mod approx;
pub mod engine;
pub mod graph;
pub mod optimize;
pub mod subgraph;
pub mod support;

pub use approx::{approximate_probability, entropy, select_top_k};
pub use engine::{gradual_inference_loop, gradual_inference_loop_inspect, GmlConfig, TrailEntry};
pub use graph::{FactorGraph, VariableState, VALUE_INTERVALS};
pub use optimize::{optimize_subgraph, OptimizerConfig, SubgraphSolution};
pub use subgraph::{build_subgraph, InferenceSubgraph};
pub use support::{
    build_kernels, ds_combine, measure_log_support, normalized_support, pair_support, select_top_m, EvidentialSupport, FeatureKernel,
    SupportCache, TailTable, TailTables,
};
