use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::cluster::Cluster;
use super::rouge::rouge1_f1;
use super::vector::vector_metrics;
use super::AnalysisError;
use crate::pool::par_map;
use crate::provider::Provider;

/// One response's closeness to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberMetrics {
    pub cosine: f64,
    pub euclidean: f64,
    pub rouge1_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityStats {
    pub mean_cosine: f64,
    pub mean_euclidean: f64,
    pub mean_rouge1_f1: f64,
    pub n: usize,
}

/// Embeds every response (concurrently) and the ground truth, and scores each
/// response against the ground truth.
pub fn member_metrics(
    responses: &[String],
    ground_truth: &str,
    embedder: &Provider,
    workers: usize,
) -> Result<Vec<MemberMetrics>, AnalysisError> {
    let gt = embedder.embed(ground_truth)?;
    par_map(responses, workers, |_, r| {
        let v = embedder.embed(r)?;
        let (cosine, euclidean) = vector_metrics(&v, &gt)?;
        Ok(MemberMetrics { cosine, euclidean, rouge1_f1: rouge1_f1(r, ground_truth) })
    })
    .into_iter()
    .collect()
}

/// Averages precomputed member metrics over a cluster's members. The ground
/// truth is never a member, so it never enters its own cluster's means.
pub fn proximity_from_members(
    cluster: &Cluster,
    members: &[MemberMetrics],
) -> Result<ProximityStats, AnalysisError> {
    if cluster.member_indices.is_empty() {
        return Err(AnalysisError::Precondition(format!("cluster {} is empty", cluster.id)));
    }
    let mut sum = (0.0, 0.0, 0.0);
    for &i in &cluster.member_indices {
        let m = members
            .get(i)
            .ok_or_else(|| AnalysisError::Precondition(format!("no metrics for response {i}")))?;
        sum.0 += m.cosine;
        sum.1 += m.euclidean;
        sum.2 += m.rouge1_f1;
    }
    let n = cluster.member_indices.len();
    Ok(ProximityStats {
        mean_cosine: sum.0 / n as f64,
        mean_euclidean: sum.1 / n as f64,
        mean_rouge1_f1: sum.2 / n as f64,
        n,
    })
}

pub fn cluster_proximity(
    cluster: &Cluster,
    responses: &[String],
    ground_truth: &str,
    embedder: &Provider,
) -> Result<ProximityStats, AnalysisError> {
    let members: Vec<String> = cluster
        .member_indices
        .iter()
        .map(|&i| {
            responses
                .get(i)
                .cloned()
                .ok_or_else(|| AnalysisError::Precondition(format!("response {i} out of range")))
        })
        .collect::<Result<_, _>>()?;
    let metrics = member_metrics(&members, ground_truth, embedder, 1)?;
    let local = Cluster {
        member_indices: (0..members.len()).collect(),
        ..cluster.clone()
    };
    proximity_from_members(&local, &metrics)
}

/// Variance floor so zero-variance groups still give a finite statistic.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch two-sample t-test. `None` when either group has fewer
/// than two samples.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (va, vb) = (va.max(VARIANCE_FLOOR), vb.max(VARIANCE_FLOOR));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Some(WelchResult { mean_a: ma, mean_b: mb, t, df, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MetricSeparation {
    Computed {
        mean_fooled: f64,
        mean_not_fooled: f64,
        p_value: f64,
        t: f64,
        df: f64,
    },
    NotComputable {
        n_fooled: usize,
        n_not_fooled: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub cosine: MetricSeparation,
    pub euclidean: MetricSeparation,
    pub rouge1_f1: MetricSeparation,
}

/// Welch test of fooled vs not-fooled members, one per metric.
pub fn fooled_separation_test(
    members: &[MemberMetrics],
    fooled: &[bool],
) -> Result<SeparationReport, AnalysisError> {
    if members.len() != fooled.len() {
        return Err(AnalysisError::Precondition(format!(
            "{} member metrics but {} fooled labels",
            members.len(),
            fooled.len()
        )));
    }
    let split = |get: fn(&MemberMetrics) -> f64| {
        let mut yes = Vec::new();
        let mut no = Vec::new();
        for (m, f) in members.iter().zip(fooled) {
            if *f { yes.push(get(m)) } else { no.push(get(m)) }
        }
        match welch_t_test(&yes, &no) {
            Some(w) => MetricSeparation::Computed {
                mean_fooled: w.mean_a,
                mean_not_fooled: w.mean_b,
                p_value: w.p_value,
                t: w.t,
                df: w.df,
            },
            None => MetricSeparation::NotComputable { n_fooled: yes.len(), n_not_fooled: no.len() },
        }
    };
    Ok(SeparationReport {
        cosine: split(|m| m.cosine),
        euclidean: split(|m| m.euclidean),
        rouge1_f1: split(|m| m.rouge1_f1),
    })
}
