use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::provider::Provider;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub member_indices: Vec<usize>,
    pub representative_index: usize,
    pub contains_ground_truth: bool,
    /// Fraction of members the ensemble retained; filled by
    /// [`annotate_fooled`], 0 until then.
    pub fooled_fraction: f64,
}

/// Greedy representative clustering over `n` items in input order. Item `i`
/// joins the first cluster whose representative `r` satisfies
/// `equivalent(i, r)`, otherwise it opens a new cluster.
pub fn greedy_clusters<E>(
    n: usize,
    mut equivalent: impl FnMut(usize, usize) -> Result<bool, E>,
) -> Result<Vec<Cluster>, E> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in 0..n {
        let mut joined = false;
        for c in clusters.iter_mut() {
            if equivalent(i, c.representative_index)? {
                c.member_indices.push(i);
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(Cluster {
                id: clusters.len(),
                member_indices: vec![i],
                representative_index: i,
                contains_ground_truth: false,
                fooled_fraction: 0.0,
            });
        }
    }
    Ok(clusters)
}

/// Marks the first cluster whose representative is equivalent to the ground
/// truth. Returns its position, or `None` when the ground truth is isolated.
pub fn place_ground_truth<E>(
    clusters: &mut [Cluster],
    mut equivalent_to_gt: impl FnMut(usize) -> Result<bool, E>,
) -> Result<Option<usize>, E> {
    for (pos, c) in clusters.iter_mut().enumerate() {
        if equivalent_to_gt(c.representative_index)? {
            c.contains_ground_truth = true;
            return Ok(Some(pos));
        }
    }
    Ok(None)
}

/// `min(NLI(a -> b), NLI(b -> a))`.
pub fn mutual_entailment(nli: &Provider, a: &str, b: &str) -> Result<f64, AnalysisError> {
    let forward = nli.nli_entail(a, b)?;
    let backward = nli.nli_entail(b, a)?;
    Ok(forward.min(backward))
}

/// Clusters responses by bidirectional entailment (score >= `tau_cluster`)
/// against each cluster's first member, then places the ground truth.
pub fn cluster_by_entailment(
    responses: &[String],
    ground_truth: &str,
    nli: &Provider,
    tau_cluster: f64,
) -> Result<Vec<Cluster>, AnalysisError> {
    if responses.is_empty() {
        return Err(AnalysisError::Precondition("no responses to cluster".into()));
    }
    if !(tau_cluster > 0.0 && tau_cluster < 1.0) {
        return Err(AnalysisError::Precondition(format!("tau_cluster {tau_cluster} not in (0, 1)")));
    }
    let mut clusters = greedy_clusters(responses.len(), |i, r| {
        Ok::<_, AnalysisError>(mutual_entailment(nli, &responses[i], &responses[r])? >= tau_cluster)
    })?;
    place_ground_truth(&mut clusters, |r| {
        Ok::<_, AnalysisError>(mutual_entailment(nli, ground_truth, &responses[r])? >= tau_cluster)
    })?;
    Ok(clusters)
}

/// Sets each cluster's `fooled_fraction` from per-response labels.
pub fn annotate_fooled(clusters: &mut [Cluster], fooled: &[bool]) -> Result<(), AnalysisError> {
    for c in clusters.iter_mut() {
        let mut hits = 0usize;
        for &i in &c.member_indices {
            let label = fooled.get(i).ok_or_else(|| {
                AnalysisError::Precondition(format!("no fooled label for response {i}"))
            })?;
            hits += usize::from(*label);
        }
        c.fooled_fraction = if c.member_indices.is_empty() {
            0.0
        } else {
            hits as f64 / c.member_indices.len() as f64
        };
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    /// `(cluster id, fooled_fraction)` in cluster order.
    pub per_cluster: Vec<(usize, f64)>,
    /// Share of clusters that are all-fooled or none-fooled.
    pub pure_fraction: f64,
    /// True when the ground truth shares no cluster with a hallucination.
    pub ground_truth_isolated: bool,
}

pub fn uniformity_report(clusters: &[Cluster]) -> UniformityReport {
    let per_cluster: Vec<(usize, f64)> = clusters.iter().map(|c| (c.id, c.fooled_fraction)).collect();
    let pure = clusters
        .iter()
        .filter(|c| c.fooled_fraction == 0.0 || c.fooled_fraction == 1.0)
        .count();
    let pure_fraction = if clusters.is_empty() { 1.0 } else { pure as f64 / clusters.len() as f64 };
    UniformityReport {
        per_cluster,
        pure_fraction,
        ground_truth_isolated: !clusters.iter().any(|c| c.contains_ground_truth),
    }
}
