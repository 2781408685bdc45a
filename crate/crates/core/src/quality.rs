//! The two filter stages of the generation pipeline: discriminator-ensemble
//! quality voting and correctness checking (bidirectional entailment plus an
//! optional LLM distinctness check).

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::model::{EntailmentResult, QualityVerdict, SamplingParams};
use crate::pool::par_map;
use crate::prompts;
use crate::provider::{Choice, Provider, ProviderError, DISCRIMINATIVE_TEMPERATURE};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetainRule {
    /// Keep a candidate that fools at least one discriminator.
    #[default]
    AnyFooled,
    /// Keep a candidate that fools a strict majority.
    MajorityFooled,
}

pub fn retained(verdict: &QualityVerdict, rule: RetainRule) -> bool {
    match rule {
        RetainRule::AnyFooled => verdict.fooled_count >= 1,
        RetainRule::MajorityFooled => 2 * verdict.fooled_count > verdict.ensemble_size(),
    }
}

/// Whether the candidate goes in slot A for this judge. Seeded per judge name
/// so the outcome does not depend on the judge's position in the list.
pub fn candidate_first(seed: u64, judge_name: &str) -> bool {
    seeds::derive_seed(seed, &["judge-position", judge_name]) & 1 == 0
}

/// Asks every discriminator (concurrently) which of candidate and ground truth
/// is more accurate. A judge is fooled when it picks the candidate. A judge
/// whose reply stays unparseable counts as not fooled.
pub fn ensemble_vote(
    question: &str,
    candidate: &str,
    ground_truth: &str,
    discriminators: &[&Provider],
    seed: u64,
) -> Result<QualityVerdict, ProviderError> {
    if discriminators.len() < 2 {
        return Err(ProviderError::Precondition(format!(
            "ensemble needs at least 2 discriminators, got {}",
            discriminators.len()
        )));
    }
    let outcomes = par_map(discriminators, discriminators.len(), |_, judge| {
        let first = candidate_first(seed, judge.name());
        let (a, b) = if first { (candidate, ground_truth) } else { (ground_truth, candidate) };
        let call_seed = seeds::derive_seed(seed, &["judge-call", judge.name()]);
        match judge.judge_pair(question, a, b, Some(call_seed)) {
            Ok(choice) => Ok((choice.chosen == Choice::A) == first),
            Err(ProviderError::JudgeParse(raw)) => {
                warn!(judge = judge.name(), raw, "unparseable judge verdict; counted as not fooled");
                Ok(false)
            }
            Err(e) => Err(e),
        }
    });
    let fooled = outcomes.into_iter().collect::<Result<Vec<bool>, _>>()?;
    QualityVerdict::from_fooled(fooled).map_err(|e| ProviderError::Precondition(e.to_string()))
}

/// `min(NLI(h -> gt), NLI(gt -> h))`, passing when below `tau`.
pub fn bidirectional_entailment(
    hallucination: &str,
    ground_truth: &str,
    nli: &Provider,
    tau: f64,
) -> Result<EntailmentResult, ProviderError> {
    if hallucination.trim().is_empty() || ground_truth.trim().is_empty() {
        return Err(ProviderError::Precondition("entailment on empty text".into()));
    }
    let forward = nli.nli_entail(hallucination, ground_truth)?;
    let backward = nli.nli_entail(ground_truth, hallucination)?;
    Ok(EntailmentResult::new(forward, backward, tau))
}

const DISTINCT_SYSTEM: &str = "You compare two answers to the same medical question. Decide \
whether they differ meaningfully in semantic content. Reply with exactly one word: \
`different` if they differ meaningfully, `same` if they mean the same thing.";

const DISTINCT_REASK: &str = "Reply with exactly one word: different or same.";

fn parse_distinct(raw: &str) -> Option<bool> {
    let word = raw
        .split_whitespace()
        .next()?
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_ascii_lowercase();
    match word.as_str() {
        "different" => Some(true),
        "same" => Some(false),
        _ => None,
    }
}

/// LLM check that the hallucination differs meaningfully from the ground
/// truth. `true` keeps the candidate. An unparseable reply after one re-ask
/// rejects it.
pub fn llm_distinctness_check(
    hallucination: &str,
    ground_truth: &str,
    checker: &Provider,
    seed: u64,
) -> Result<bool, ProviderError> {
    let user = format!(
        "Do these answers differ meaningfully in semantic content?\n{}{}",
        prompts::section(prompts::FIRST, hallucination),
        prompts::section(prompts::SECOND, ground_truth),
    );
    let params = SamplingParams::with_temperature(DISCRIMINATIVE_TEMPERATURE).seeded(seed);
    let first = checker.complete(DISTINCT_SYSTEM, &user, &params)?;
    if let Some(v) = parse_distinct(&first) {
        return Ok(v);
    }
    let second = checker.complete(DISTINCT_SYSTEM, &format!("{DISTINCT_REASK}\n{user}"), &params)?;
    Ok(parse_distinct(&second).unwrap_or_else(|| {
        warn!(checker = checker.name(), raw = second, "unparseable distinctness reply; rejecting");
        false
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Difficulty;
    use crate::provider::{MockBackend, ProviderKind};

    const GT: &str = "the ground truth answer";
    const CAND: &str = "the hallucinated answer";

    fn judge(name: &str, fooled: bool) -> Provider {
        Provider::mock(
            name,
            ProviderKind::Judge,
            MockBackend::judge_preferring(move |_, a, _| {
                let a_is_gt = a == GT;
                if fooled == a_is_gt { Choice::B } else { Choice::A }
            }),
        )
    }

    fn vote(pattern: &[bool], seed: u64) -> QualityVerdict {
        let judges: Vec<Provider> =
            pattern.iter().enumerate().map(|(i, f)| judge(&format!("j{i}"), *f)).collect();
        let refs: Vec<&Provider> = judges.iter().collect();
        ensemble_vote("q", CAND, GT, &refs, seed).unwrap()
    }

    #[test]
    fn named_votes() {
        let v = vote(&[true, true, true], 1);
        assert_eq!((v.fooled_count, v.difficulty), (3, Difficulty::Hard));
        assert_eq!(vote(&[true, false, false], 1).difficulty, Difficulty::Easy);
        assert_eq!(vote(&[false, false, false], 1).difficulty, Difficulty::Failed);
        assert_eq!(vote(&[true, false, true], 1).difficulty, Difficulty::Medium);
    }

    #[test]
    fn position_blind_across_seeds() {
        // seeds flip the A/B placement; de-randomized outcome must not change
        let mut placements = std::collections::HashSet::new();
        for seed in 0..32 {
            placements.insert(candidate_first(seed, "j0"));
            assert_eq!(vote(&[true, false, true], seed).fooled, vec![true, false, true]);
        }
        assert_eq!(placements.len(), 2);
    }

    #[test]
    fn judge_list_order_does_not_change_grade() {
        let a = vote(&[true, false, false], 9);
        let judges = [judge("j2", false), judge("j0", true), judge("j1", false)];
        let refs: Vec<&Provider> = judges.iter().collect();
        let b = ensemble_vote("q", CAND, GT, &refs, 9).unwrap();
        assert_eq!((a.fooled_count, a.difficulty), (b.fooled_count, b.difficulty));
    }

    #[test]
    fn unparseable_judge_is_not_fooled() {
        let judges = [
            judge("j0", true),
            Provider::mock("j1", ProviderKind::Judge, MockBackend::constant_reply("neither")),
        ];
        let refs: Vec<&Provider> = judges.iter().collect();
        let v = ensemble_vote("q", CAND, GT, &refs, 0).unwrap();
        assert_eq!(v.fooled, vec![true, false]);
    }

    #[test]
    fn transport_failure_propagates() {
        let judges = [
            judge("j0", true),
            Provider::mock(
                "j1",
                ProviderKind::Judge,
                MockBackend::default().with_chat(|_| Err(ProviderError::Transport("down".into()))),
            ),
        ];
        let refs: Vec<&Provider> = judges.iter().collect();
        assert!(ensemble_vote("q", CAND, GT, &refs, 0).is_err());
    }

    #[test]
    fn retain_rules() {
        let v = |c: usize| QualityVerdict::from_fooled((0..3).map(|i| i < c).collect()).unwrap();
        assert!(retained(&v(1), RetainRule::AnyFooled));
        assert!(!retained(&v(1), RetainRule::MajorityFooled));
        assert!(retained(&v(2), RetainRule::MajorityFooled));
        assert!(!retained(&v(0), RetainRule::AnyFooled));
    }

    fn scripted_nli(forward: f64, backward: f64) -> Provider {
        Provider::mock(
            "nli",
            ProviderKind::Nli,
            MockBackend::default().with_nli(move |p, _| Ok(if p == CAND { forward } else { backward })),
        )
    }

    #[test]
    fn entailment_named_cases() {
        let r = bidirectional_entailment(CAND, GT, &scripted_nli(0.9, 0.6), 0.75).unwrap();
        assert_eq!((r.score, r.passes), (0.6, true));
        let r = bidirectional_entailment(CAND, GT, &scripted_nli(0.8, 0.8), 0.75).unwrap();
        assert!(!r.passes);
        let faithful = Provider::mock("nli", ProviderKind::Nli, MockBackend::default());
        let r = bidirectional_entailment(GT, GT, &faithful, 0.75).unwrap();
        assert_eq!((r.score, r.passes), (1.0, false));
        assert!(bidirectional_entailment("", GT, &faithful, 0.75).is_err());
    }

    #[test]
    fn distinctness_check() {
        let different = Provider::mock("c", ProviderKind::Generate, MockBackend::constant_reply("Different."));
        assert!(llm_distinctness_check(CAND, GT, &different, 0).unwrap());
        let same = Provider::mock("c", ProviderKind::Generate, MockBackend::constant_reply("same"));
        assert!(!llm_distinctness_check(CAND, GT, &same, 0).unwrap());
        let honest = Provider::mock("c", ProviderKind::Generate, MockBackend::builtin("checker", "c").unwrap());
        assert!(!llm_distinctness_check(GT, GT, &honest, 0).unwrap());
        assert!(llm_distinctness_check(CAND, GT, &honest, 0).unwrap());
        let garbled = Provider::mock("c", ProviderKind::Generate, MockBackend::constant_reply("hmm"));
        assert!(!llm_distinctness_check(CAND, GT, &garbled, 0).unwrap());
    }
}
