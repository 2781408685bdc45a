//! Semantic analysis of candidate pools: entailment clustering, proximity of
//! clusters to the ground truth, fooled-vs-not-fooled separation, cluster
//! uniformity and ground-truth isolation.

pub mod cluster;
pub mod proximity;
pub mod rouge;
pub mod vector;

use thiserror::Error;

use crate::provider::ProviderError;

pub use cluster::{
    annotate_fooled, cluster_by_entailment, greedy_clusters, uniformity_report, Cluster,
    UniformityReport,
};
pub use proximity::{
    cluster_proximity, fooled_separation_test, member_metrics, proximity_from_members,
    welch_t_test, MemberMetrics, MetricSeparation, ProximityStats, SeparationReport, WelchResult,
};
pub use rouge::{rouge1_f1, tokenize};
pub use vector::{cosine, euclidean, vector_metrics, VectorError};

/// Default candidate pool size per question.
pub const DEFAULT_POOL_SIZE: usize = 50;
/// Default mutual-entailment threshold for clustering.
pub const DEFAULT_TAU_CLUSTER: f64 = 0.75;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("precondition failed: {0}")]
    Precondition(String),
}
