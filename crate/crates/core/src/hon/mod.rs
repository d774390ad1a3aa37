//! Higher-order states and the layered network representation.

mod build;
mod cluster;
mod matrix;
mod network;
mod state;

pub use build::{
    assemble, build_fixed_order, build_fon, build_variable_order, init_distribution,
    promoted_contexts, DistributionMode, PromotionRule,
};
pub use cluster::{
    cluster_distance, cluster_profiles, euclidean, init_aggregation_hclust, Profile,
    DEFAULT_MERGE_THRESHOLD,
};
pub use matrix::{
    block_bin, block_projection, build_mask, counts_to_t, node_transition_counts,
    AggregationMatrix, ColumnMatrix, DistributionMatrix, MaskMatrix, StateTransitionMatrix,
    TransitionMatrix,
};
pub use network::{
    HONode, Network, NetworkBundle, NetworkKind, NodeRecord, Provenance, StateIndex,
    BUNDLE_MIN_PROBABILITY,
};
pub use state::{
    extract_states, extract_states_for_blocks, extract_states_pruned, HOState, StateStats,
};
