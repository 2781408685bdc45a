//! Candidate-pool analysis: entailment clusters, proximity to the ground
//! truth, fooled-vs-not-fooled separation and cluster uniformity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::model::{HallucinationRecord, QaItem};
use crate::pipeline::{Pipeline, PipelineError};
use crate::pool::par_map;
use crate::provider::Provider;
use crate::quality::{ensemble_vote, retained};
use crate::seeds;
use crate::semantic::{
    annotate_fooled, cluster_by_entailment, fooled_separation_test, member_metrics, proximity_from_members,
    uniformity_report, Cluster, MemberMetrics, ProximityStats, SeparationReport, UniformityReport,
};

use super::{load_corpus, read_jsonl, write_atomic, write_json, OrchestratorError, RunConfig};

/// One question's candidate pool. Also the row format of a raw responses
/// JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub item_id: String,
    pub question: String,
    pub ground_truth: String,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub config: PathBuf,
    /// Benchmark records; needs `corpus` for questions and ground truths.
    pub benchmark: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Raw responses JSONL, used instead of `benchmark`.
    pub responses: Option<PathBuf>,
    pub out: PathBuf,
    pub pool_size: Option<usize>,
    /// Fill short pools with fresh generator samples (needs the corpus).
    pub top_up: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    #[serde(flatten)]
    pub cluster: Cluster,
    pub proximity: ProximityStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemAnalysis {
    pub item_id: String,
    pub n_responses: usize,
    pub clusters: Vec<ClusterReport>,
    pub uniformity: UniformityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOutput {
    pub pool_size: usize,
    pub tau_cluster: f64,
    pub items: Vec<ItemAnalysis>,
    /// Member-level Welch tests pooled over every item.
    pub separation: SeparationReport,
    pub pure_fraction: f64,
    pub ground_truth_isolated_fraction: f64,
}

pub const CLUSTERS_FILE: &str = "clusters.json";
pub const MEMBERS_FILE: &str = "members.csv";

fn sets_from_benchmark(records: &[HallucinationRecord], items: &BTreeMap<&str, &QaItem>) -> Result<Vec<ResponseSet>, OrchestratorError> {
    records
        .iter()
        .map(|r| {
            let item = items.get(r.item_id.as_str()).ok_or_else(|| {
                OrchestratorError::Corpus(format!("record {} has no matching corpus item", r.item_id))
            })?;
            let mut responses = vec![r.hallucinated_answer.clone()];
            responses.extend(r.rejected_candidates.iter().map(|c| c.text.clone()));
            Ok(ResponseSet {
                item_id: r.item_id.clone(),
                question: item.question.clone(),
                ground_truth: item.ground_truth.clone(),
                responses,
            })
        })
        .collect()
}

fn top_up(set: &mut ResponseSet, item: &QaItem, pipeline: &Pipeline, pool_size: usize, seed: u64) -> Result<(), OrchestratorError> {
    let mut draw = 0u64;
    // bounded so a generator that never parses cannot loop forever
    while set.responses.len() < pool_size && draw < 2 * pool_size as u64 {
        let s = seeds::derive_seed(seed, &["top-up", &draw.to_string()]);
        draw += 1;
        match pipeline.generate_candidate(item, 1, None, s) {
            Ok(c) => set.responses.push(c.text),
            Err(PipelineError::GenerationParse(msg)) => warn!(item = item.id, msg, "top-up sample unparseable"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn analyze_set(
    set: &ResponseSet,
    pipeline: &Pipeline,
    tau_cluster: f64,
    seed: u64,
    workers: usize,
) -> Result<(ItemAnalysis, Vec<MemberMetrics>, Vec<bool>), OrchestratorError> {
    let judges: Vec<&Provider> = pipeline.providers.discriminators.iter().map(|p| p.as_ref()).collect();
    let fooled = par_map(&set.responses, workers, |i, r| {
        let s = seeds::derive_seed(seed, &["analyze-vote", &i.to_string()]);
        ensemble_vote(&set.question, r, &set.ground_truth, &judges, s)
            .map(|v| retained(&v, pipeline.config.retain_rule))
    })
    .into_iter()
    .collect::<Result<Vec<bool>, _>>()
    .map_err(PipelineError::from)?;
    let mut clusters = cluster_by_entailment(&set.responses, &set.ground_truth, &pipeline.providers.nli, tau_cluster)?;
    annotate_fooled(&mut clusters, &fooled)?;
    let members = member_metrics(&set.responses, &set.ground_truth, &pipeline.providers.embedder, workers)?;
    let uniformity = uniformity_report(&clusters);
    let clusters = clusters
        .into_iter()
        .map(|c| Ok(ClusterReport { proximity: proximity_from_members(&c, &members)?, cluster: c }))
        .collect::<Result<Vec<_>, OrchestratorError>>()?;
    let analysis = ItemAnalysis { item_id: set.item_id.clone(), n_responses: set.responses.len(), clusters, uniformity };
    Ok((analysis, members, fooled))
}

/// Clusters each item's candidate pool and writes `clusters.json` plus a
/// member-level `members.csv`.
pub fn cmd_analyze(opts: &AnalyzeOptions) -> Result<AnalysisOutput, OrchestratorError> {
    let (cfg, roster) = RunConfig::load(&opts.config)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let workers = opts.workers.unwrap_or(cfg.workers).max(1);
    let pool_size = opts.pool_size.unwrap_or(cfg.pool_size);
    if pool_size == 0 {
        return Err(OrchestratorError::Config("pool size must be positive".into()));
    }
    let pipeline = Pipeline::from_roster(cfg.pipeline.clone(), &roster)?;
    let corpus = opts.corpus.as_deref().map(load_corpus).transpose()?;
    let items: BTreeMap<&str, &QaItem> = corpus
        .iter()
        .flat_map(|c| c.items.iter())
        .map(|i| (i.id.as_str(), i))
        .collect();

    let mut sets = match (&opts.benchmark, &opts.responses) {
        (Some(b), None) => {
            if corpus.is_none() {
                return Err(OrchestratorError::Config("analyzing a benchmark needs --corpus".into()));
            }
            sets_from_benchmark(&read_jsonl(b)?, &items)?
        }
        (None, Some(r)) => read_jsonl::<ResponseSet>(r)?,
        _ => return Err(OrchestratorError::Config("give exactly one of --benchmark or --responses".into())),
    };
    if sets.is_empty() {
        return Err(OrchestratorError::Corpus("nothing to analyze".into()));
    }

    let mut analyses = Vec::new();
    let mut all_members = Vec::new();
    let mut all_fooled = Vec::new();
    let mut csv = String::from("item_id,response_index,cluster_id,fooled,cosine,euclidean,rouge1_f1\n");
    for set in sets.iter_mut() {
        let item_seed = seeds::item_seed(seed, &set.item_id);
        if opts.top_up && set.responses.len() < pool_size {
            let item = items.get(set.item_id.as_str()).ok_or_else(|| {
                OrchestratorError::Config(format!("top-up for {} needs its corpus item", set.item_id))
            })?;
            top_up(set, item, &pipeline, pool_size, item_seed)?;
        }
        set.responses.truncate(pool_size);
        if set.responses.is_empty() {
            warn!(item = set.item_id, "empty response set skipped");
            continue;
        }
        let (analysis, members, fooled) = analyze_set(set, &pipeline, cfg.tau_cluster, item_seed, workers)?;
        let mut cluster_of = vec![0usize; members.len()];
        for c in &analysis.clusters {
            for &i in &c.cluster.member_indices {
                cluster_of[i] = c.cluster.id;
            }
        }
        for (i, (m, f)) in members.iter().zip(&fooled).enumerate() {
            let _ = writeln!(
                csv,
                "{},{i},{},{f},{:.6},{:.6},{:.6}",
                set.item_id, cluster_of[i], m.cosine, m.euclidean, m.rouge1_f1
            );
        }
        all_members.extend(members);
        all_fooled.extend(fooled);
        analyses.push(analysis);
    }

    let n_clusters: usize = analyses.iter().map(|a| a.clusters.len()).sum();
    let pure: f64 = analyses
        .iter()
        .map(|a| a.uniformity.pure_fraction * a.clusters.len() as f64)
        .sum();
    let isolated = analyses.iter().filter(|a| a.uniformity.ground_truth_isolated).count();
    let output = AnalysisOutput {
        pool_size,
        tau_cluster: cfg.tau_cluster,
        separation: fooled_separation_test(&all_members, &all_fooled)?,
        pure_fraction: if n_clusters == 0 { 1.0 } else { pure / n_clusters as f64 },
        ground_truth_isolated_fraction: if analyses.is_empty() { 0.0 } else { isolated as f64 / analyses.len() as f64 },
        items: analyses,
    };
    write_json(&opts.out.join(CLUSTERS_FILE), &output)?;
    write_atomic(&opts.out.join(MEMBERS_FILE), csv.as_bytes())?;
    Ok(output)
}
