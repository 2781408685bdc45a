#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use hallubench::model::{Difficulty, HallucinationCategory, HallucinationRecord, QaItem};
use hallubench::pipeline::{Pipeline, PipelineConfig, PipelineProviders};
use hallubench::provider::{Choice, MockBackend, Provider, ProviderError, ProviderKind};

/// Six words, so six-word candidates sit at length ratio 1.0.
pub const GT: &str = "w-d hccs were not early cancer";

pub fn item(id: &str) -> QaItem {
    QaItem {
        id: id.into(),
        question: "Are well-differentiated HCCs early cancer?".into(),
        ground_truth: GT.into(),
        knowledge: vec!["Resected small HCCs were reviewed.".into()],
        tags: vec!["Humans".into()],
        split: "labeled".into(),
    }
}

pub fn reply(text: &str) -> String {
    format!("category: incomplete_information\nanswer: {text}")
}

/// Replies in call order; the last one repeats.
pub fn scripted_generator(replies: Vec<String>) -> Arc<Provider> {
    let n = AtomicUsize::new(0);
    Arc::new(Provider::mock(
        "gen",
        ProviderKind::Generate,
        MockBackend::default().with_chat(move |_| {
            let i = n.fetch_add(1, Ordering::SeqCst);
            Ok(replies[i.min(replies.len() - 1)].clone())
        }),
    ))
}

/// Judge `j` is fooled by any candidate containing the token `f{j}`.
pub fn marker_judge(j: usize) -> Arc<Provider> {
    let marker = format!("f{j}");
    Arc::new(Provider::mock(
        &format!("j{j}"),
        ProviderKind::Judge,
        MockBackend::judge_preferring(move |_, a, b| {
            let cand_is_a = a != GT;
            let cand = if cand_is_a { a } else { b };
            let fooled = cand.split_whitespace().any(|w| w == marker);
            if fooled == cand_is_a { Choice::A } else { Choice::B }
        }),
    ))
}

/// Entailment 0.9 in both directions for texts containing `ent`, else 0.2.
pub fn token_nli() -> Arc<Provider> {
    Arc::new(Provider::mock(
        "nli",
        ProviderKind::Nli,
        MockBackend::default().with_nli(|p, h| {
            let has = |t: &str| t.split_whitespace().any(|w| w == "ent");
            Ok(if has(p) || has(h) { 0.9 } else { 0.2 })
        }),
    ))
}

pub fn critic(ok: bool) -> Arc<Provider> {
    let backend = if ok {
        MockBackend::constant_reply("reads as templated; mirror the reference structure")
    } else {
        MockBackend::default().with_chat(|_| Err(ProviderError::Transport("critic down".into())))
    };
    Arc::new(Provider::mock("critic", ProviderKind::Generate, backend))
}

pub fn providers(gen: Arc<Provider>, judges: Vec<Arc<Provider>>, critic_ok: bool) -> PipelineProviders {
    PipelineProviders {
        generator: gen,
        discriminators: judges,
        nli: token_nli(),
        embedder: Arc::new(Provider::mock("emb", ProviderKind::Embed, MockBackend::default())),
        critic: critic(critic_ok),
        checker: None,
    }
}

pub fn pipeline(providers: PipelineProviders, budget: u32) -> Pipeline {
    let names: Vec<String> = providers.discriminators.iter().map(|p| p.name().to_string()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut cfg = PipelineConfig::new("gen", &refs, "nli", "emb", "critic");
    cfg.attempt_budget = budget;
    Pipeline::new(cfg, providers).expect("valid scripted pipeline")
}

pub fn record(i: usize, difficulty: Difficulty, category: HallucinationCategory) -> HallucinationRecord {
    HallucinationRecord {
        item_id: format!("q{i}"),
        hallucinated_answer: format!("fabricated answer number {i}"),
        category,
        difficulty,
        fallback_used: difficulty == Difficulty::Easy && i % 3 == 0,
        attempts_made: 1,
        entailment: None,
        feedback_log: vec![],
        rejected_candidates: vec![],
    }
}

pub const MESH: [&str; 5] = ["Humans", "Adult", "Female", "Male", "Aged"];

/// A corpus of `n` items with varied word counts and tags.
pub fn corpus_items(n: usize) -> Vec<QaItem> {
    (0..n)
        .map(|i| QaItem {
            id: format!("pmid-{}", 1000 + i),
            question: format!("Does treatment {i} improve outcomes in patients with condition {}?", i % 7),
            ground_truth: format!(
                "Treatment {i} improved survival in patients with condition {} compared with standard care in the cohort",
                i % 7
            ),
            knowledge: vec![format!("A cohort study of treatment {i}."), "Outcomes were tracked for five years.".into()],
            tags: vec![MESH[i % MESH.len()].to_string()],
            split: "labeled".into(),
        })
        .collect()
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

/// Roster of built-in mocks plus oracle and constant detectors.
pub const MOCK_ROSTER: &str = r#"[
  {"name": "gen", "kind": "generate", "endpoint": "mock://generator", "model_id": "gen-a"},
  {"name": "j1", "kind": "judge", "endpoint": "mock://judge", "model_id": "judge-1"},
  {"name": "j2", "kind": "judge", "endpoint": "mock://judge", "model_id": "judge-2"},
  {"name": "j3", "kind": "judge", "endpoint": "mock://judge", "model_id": "judge-3"},
  {"name": "nli", "kind": "nli", "endpoint": "mock://nli", "model_id": "nli"},
  {"name": "emb", "kind": "embed", "endpoint": "mock://embed", "model_id": "emb"},
  {"name": "critic", "kind": "generate", "endpoint": "mock://critic", "model_id": "critic"},
  {"name": "oracle", "kind": "generate", "endpoint": "mock://oracle", "model_id": "oracle"},
  {"name": "always-yes", "kind": "generate", "endpoint": "mock://detector-yes", "model_id": "yes"}
]"#;

pub const MOCK_RUN: &str = r#"{
  "pipeline": {"generator": "gen", "discriminators": ["j1", "j2", "j3"], "nli": "nli",
               "embedder": "emb", "critic": "critic"},
  "providers": "roster.json",
  "seed": 11,
  "workers": 4,
  "pool_size": 12
}"#;

/// Writes roster.json, run.json and corpus.jsonl into `dir`.
pub fn mock_workspace(dir: &Path, items: &[QaItem]) {
    std::fs::write(dir.join("roster.json"), MOCK_ROSTER).unwrap();
    std::fs::write(dir.join("run.json"), MOCK_RUN).unwrap();
    write_jsonl(&dir.join("corpus.jsonl"), items);
}

/// Thread-safe call log for scripted backends.
#[derive(Clone, Default)]
pub struct CallLog(pub Arc<Mutex<Vec<String>>>);

impl CallLog {
    pub fn push(&self, s: String) {
        self.0.lock().unwrap().push(s);
    }
    pub fn take(&self) -> Vec<String> {
        std::mem::take(&mut *self.0.lock().unwrap())
    }
}

pub fn counts<T: std::hash::Hash + Eq>(xs: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for x in xs {
        *m.entry(x).or_default() += 1;
    }
    m
}
