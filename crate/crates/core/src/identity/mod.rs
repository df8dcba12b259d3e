//! Global alignment, percent identity and greedy identity-threshold clustering.

mod align;
mod cluster;

pub use align::{
    align_bytes, global_align, identity_bytes, is_match, percent_identity, AlignParams, Alignment, GAP, SEPARATOR,
};
pub use cluster::{
    clustering_sequence, greedy_cluster, greedy_cluster_sequences, Cluster, ClusterAssignment, ClusterConfig,
};
