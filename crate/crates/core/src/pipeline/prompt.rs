use crate::model::{HallucinationCategory, QaItem};
use crate::prompts;

use super::PipelineError;

const GENERATION_SYSTEM_HEAD: &str = "You are an expert in medicine building a benchmark for \
hallucination detection. Given a question, its correct answer and the supporting knowledge, \
write one answer that sounds plausible and stays close to the correct answer in wording and \
length, but is factually wrong. Pick the single hallucination type below that fits the \
question best.";

const GENERATION_SYSTEM_TAIL: &str = "Reply in exactly this format and nothing else:\n\
category: <one of misinterpretation_of_question | incomplete_information | \
mechanism_pathway_misattribution | methodological_evidence_fabrication>\n\
answer: <the hallucinated answer>";

/// Generation prompt. The system prompt carries the category definitions and
/// examples; the user prompt carries the item and any prior critiques, in
/// order.
pub fn build_generation_prompt(
    item: &QaItem,
    prior_feedback: Option<&[String]>,
) -> Result<(String, String), PipelineError> {
    if item.knowledge.iter().all(|k| k.trim().is_empty()) {
        return Err(PipelineError::MissingKnowledge(item.id.clone()));
    }
    let mut system = String::from(GENERATION_SYSTEM_HEAD);
    system.push_str("\n\nHallucination types:\n");
    for (i, c) in HallucinationCategory::ALL.iter().enumerate() {
        let (q, a) = c.example();
        system.push_str(&format!(
            "{}. {} ({}): {}\n   Example question: {}\n   Example answer: {}\n",
            i + 1,
            c.title(),
            c.as_str(),
            c.description(),
            q,
            a
        ));
    }
    system.push('\n');
    system.push_str(GENERATION_SYSTEM_TAIL);

    let mut user = String::from("Write the hallucinated answer for the item below.\n");
    if prior_feedback.is_some_and(|f| !f.is_empty()) {
        user.push_str("Use the critiques of earlier attempts to make the answer harder to detect.\n");
    }
    user.push_str(&prompts::section(prompts::KNOWLEDGE, &item.knowledge.join("\n")));
    user.push_str(&prompts::section(prompts::QUESTION, &item.question));
    user.push_str(&prompts::section(prompts::GROUND_TRUTH, &item.ground_truth));
    if let Some(feedback) = prior_feedback {
        for critique in feedback {
            user.push_str(&prompts::section(prompts::CRITIQUE, critique));
        }
    }
    Ok((system, user))
}

fn normalize_token(s: &str) -> String {
    let mut out = String::new();
    for ch in s.trim().chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

/// Accepts the snake_case token or the heading, in any case.
pub fn parse_category(raw: &str) -> Option<HallucinationCategory> {
    let norm = normalize_token(raw);
    HallucinationCategory::ALL
        .into_iter()
        .find(|c| c.as_str() == norm || normalize_token(c.title()) == norm)
}

/// Parses `category: ...` and `answer: ...` lines (keys case-insensitive; the
/// answer runs to the end of the reply).
pub fn parse_generation_reply(raw: &str) -> Result<(HallucinationCategory, String), PipelineError> {
    let mut category = None;
    let mut answer: Option<String> = None;
    for line in raw.lines() {
        if let Some(a) = answer.as_mut() {
            a.push('\n');
            a.push_str(line);
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        match key.trim().trim_matches('*').to_ascii_lowercase().as_str() {
            "category" if category.is_none() => {
                category = Some(parse_category(value).ok_or_else(|| {
                    PipelineError::GenerationParse(format!("unknown category `{}`", value.trim()))
                })?)
            }
            "answer" => answer = Some(value.to_string()),
            _ => {}
        }
    }
    let category =
        category.ok_or_else(|| PipelineError::GenerationParse("reply has no category line".into()))?;
    let answer = answer.map(|a| a.trim().to_string()).unwrap_or_default();
    if answer.is_empty() {
        return Err(PipelineError::GenerationParse("reply has no answer text".into()));
    }
    Ok((category, answer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(knowledge: Vec<&str>) -> QaItem {
        QaItem {
            id: "i1".into(),
            question: "How does penicillin treat strep throat?".into(),
            ground_truth: "It inhibits cell wall synthesis of Streptococcus pyogenes.".into(),
            knowledge: knowledge.into_iter().map(String::from).collect(),
            tags: vec![],
            split: "labeled".into(),
        }
    }

    #[test]
    fn prompt_carries_all_categories_and_item() {
        let (system, user) = build_generation_prompt(&item(vec!["ctx"]), None).unwrap();
        for c in HallucinationCategory::ALL {
            assert!(system.contains(c.title()), "{}", c.title());
            assert!(system.contains(c.as_str()));
        }
        assert!(system.contains("Misinterpretation of Question"));
        assert_eq!(prompts::extract_section(&user, prompts::KNOWLEDGE).unwrap(), "ctx");
        assert!(prompts::extract_section(&user, prompts::GROUND_TRUTH).is_some());
        assert!(prompts::extract_all(&user, prompts::CRITIQUE).is_empty());
    }

    #[test]
    fn feedback_appears_in_order() {
        let fb = vec!["first critique".to_string(), "second critique".to_string()];
        let (_, user) = build_generation_prompt(&item(vec!["ctx"]), Some(&fb)).unwrap();
        assert_eq!(prompts::extract_all(&user, prompts::CRITIQUE), fb);
        assert!(user.find("first critique").unwrap() < user.find("second critique").unwrap());
    }

    #[test]
    fn empty_knowledge_is_error() {
        assert!(matches!(
            build_generation_prompt(&item(vec![]), None),
            Err(PipelineError::MissingKnowledge(_))
        ));
    }

    #[test]
    fn parses_structured_reply() {
        let (c, a) = parse_generation_reply(
            "category: incomplete_information\nanswer: Penicillin kills bacteria.",
        )
        .unwrap();
        assert_eq!(c, HallucinationCategory::IncompleteInformation);
        assert_eq!(a, "Penicillin kills bacteria.");
        let (c, _) = parse_generation_reply("Category: Mechanism and Pathway Misattribution\nAnswer: x").unwrap();
        assert_eq!(c, HallucinationCategory::MechanismPathwayMisattribution);
    }

    #[test]
    fn rejects_unparseable_replies() {
        assert!(parse_generation_reply("just an answer").is_err());
        assert!(parse_generation_reply("category: incomplete_information\n").is_err());
        assert!(parse_generation_reply("category: other\nanswer: x").is_err());
        assert!(parse_generation_reply("answer: x").is_err());
    }
}
