//! Splitting an instance into clusters small enough for the backends.

mod metrics;
mod moves;
mod state;
mod vns;

use thiserror::Error;

pub use metrics::{
    calinski_harabasz, davies_bouldin, modularity, score_partition, ClusterMetric, SimilarityView,
    EMBED_DIMS,
};
pub use moves::{balanced_partition, insertion_perturb, random_feasible_partition};
pub use vns::{multiform_vns_init, multiform_vns_on_view, MultiformOutcome, VnsConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("{0:?} is undefined for a single cluster")]
    DegenerateMetric(ClusterMetric),
    #[error("no partition of {n} nodes has every cluster between 2 and {max_cluster_size} nodes")]
    InfeasibleConstraints { n: usize, max_cluster_size: usize },
    #[error("no node can move without breaking a size bound")]
    NoLegalMove,
}
