//! Corpus ingestion. Accepts native `QaItem` JSONL, a PubMedQA labeled-set
//! dump (object keyed by PMID with upper-case fields), or PubMedQA rows as
//! exported by dataset hubs (`pubid`, `question`, `context`, `long_answer`),
//! either as a JSON array or one row per line.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::model::QaItem;

use super::OrchestratorError;

pub const PUBMEDQA_SPLIT: &str = "pubmedqa";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    /// `line N` for JSONL, the object key or `row N` for JSON.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Corpus {
    pub items: Vec<QaItem>,
    pub errors: Vec<RowError>,
}

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str))
}

fn str_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(xs)) => xs.iter().filter_map(|x| x.as_str().map(str::to_string)).collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    }
}

fn id_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Converts one row in any supported shape. `key` is the enclosing object key
/// for keyed dumps.
pub fn row_to_item(key: Option<&str>, v: &Value) -> Result<QaItem, String> {
    if !v.is_object() {
        return Err("row is not a JSON object".into());
    }
    let item = if v.get("ground_truth").is_some() {
        serde_json::from_value::<QaItem>(v.clone()).map_err(|e| e.to_string())?
    } else {
        let question = str_field(v, &["QUESTION", "question"]).ok_or("missing question")?;
        let answer = str_field(v, &["LONG_ANSWER", "long_answer"]).ok_or("missing long_answer")?;
        let (contexts, meshes) = match v.get("context") {
            Some(ctx @ Value::Object(_)) => (str_list(ctx.get("contexts")), str_list(ctx.get("meshes"))),
            _ => (str_list(v.get("CONTEXTS")), str_list(v.get("MESHES"))),
        };
        let id = id_string(v.get("pubid"))
            .or_else(|| id_string(v.get("id")))
            .or_else(|| key.map(str::to_string))
            .ok_or("missing id")?;
        QaItem {
            id,
            question: question.to_string(),
            ground_truth: answer.to_string(),
            knowledge: contexts,
            tags: meshes,
            split: PUBMEDQA_SPLIT.to_string(),
        }
    };
    item.validate().map_err(|e| e.to_string())?;
    Ok(item)
}

fn push(corpus: &mut Corpus, seen: &mut HashSet<String>, location: String, row: Result<QaItem, String>) {
    match row {
        Ok(item) if !seen.insert(item.id.clone()) => corpus.errors.push(RowError {
            location,
            message: format!("duplicate id `{}`", item.id),
        }),
        Ok(item) => corpus.items.push(item),
        Err(message) => corpus.errors.push(RowError { location, message }),
    }
}

/// Parses corpus text. Malformed rows go to the error report.
pub fn parse_corpus(text: &str) -> Corpus {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(rows)) => {
            for (i, row) in rows.iter().enumerate() {
                push(&mut corpus, &mut seen, format!("row {}", i + 1), row_to_item(None, row));
            }
            return corpus;
        }
        Ok(Value::Object(map)) if !map.values().all(Value::is_object) || map.is_empty() => {
            // a single native or hub row
            let row = Value::Object(map);
            push(&mut corpus, &mut seen, "line 1".into(), row_to_item(None, &row));
            return corpus;
        }
        Ok(Value::Object(map)) => {
            for (key, row) in &map {
                push(&mut corpus, &mut seen, key.clone(), row_to_item(Some(key), row));
            }
            return corpus;
        }
        _ => {}
    }
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str::<Value>(line)
            .map_err(|e| format!("invalid JSON: {e}"))
            .and_then(|v| row_to_item(None, &v));
        push(&mut corpus, &mut seen, format!("line {}", i + 1), row);
    }
    corpus
}

/// Loads a corpus file. Zero valid rows is fatal.
pub fn load_corpus(path: &Path) -> Result<Corpus, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::io(path, e))?;
    let corpus = parse_corpus(&text);
    if corpus.items.is_empty() {
        let first = corpus.errors.first().map(|e| format!("; first error at {}: {}", e.location, e.message));
        return Err(OrchestratorError::Corpus(format!(
            "{} has no valid rows{}",
            path.display(),
            first.unwrap_or_default()
        )));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn native_jsonl() {
        let text = r#"{"id":"a","question":"q?","ground_truth":"g","knowledge":["k"]}
{"id":"b","question":"q?","ground_truth":"g"}

{"id":"c","question":"q?","ground_truth":"g","tags":["t"],"split":"artificial"}
"#;
        let c = parse_corpus(text);
        assert_eq!(c.items.len(), 3);
        assert!(c.errors.is_empty());
        assert_eq!(c.items[2].tags, vec!["t"]);
    }

    #[test]
    fn bad_rows_are_reported() {
        let text = r#"{"id":"a","ground_truth":"g"}
not json
{"id":"b","question":"q?","ground_truth":"g"}
{"id":"b","question":"q?","ground_truth":"g2"}
"#;
        let c = parse_corpus(text);
        assert_eq!(c.items.len(), 1);
        let locs: Vec<&str> = c.errors.iter().map(|e| e.location.as_str()).collect();
        assert_eq!(locs, vec!["line 1", "line 2", "line 4"]);
    }

    #[test]
    fn pubmedqa_keyed_dump() {
        let text = r#"{"21645374": {"QUESTION": "Do mitochondria play a role?", "CONTEXTS": ["c1", "c2"],
            "LONG_ANSWER": "Results depict mitochondrial dynamics.", "MESHES": ["Mitochondria", "Plant Leaves"],
            "final_decision": "yes"}}"#;
        let c = parse_corpus(text);
        assert_eq!(c.items.len(), 1);
        let it = &c.items[0];
        assert_eq!((it.id.as_str(), it.split.as_str()), ("21645374", PUBMEDQA_SPLIT));
        assert_eq!(it.knowledge, vec!["c1", "c2"]);
        assert_eq!(it.primary_tag(), Some("Mitochondria"));
    }

    #[test]
    fn hub_rows_as_array_and_lines() {
        let row = r#"{"pubid": 7, "question": "q?", "context": {"contexts": ["c"], "meshes": ["m"]}, "long_answer": "la"}"#;
        let c = parse_corpus(&format!("[{row}]"));
        assert_eq!((c.items[0].id.as_str(), c.items[0].ground_truth.as_str()), ("7", "la"));
        let c = parse_corpus(&format!("{row}\n{}", row.replace("\"pubid\": 7", "\"pubid\": 8")));
        assert_eq!(c.items.len(), 2);
    }

    #[test]
    fn zero_valid_rows_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        std::fs::write(&p, "{\"id\":\"a\"}\n").unwrap();
        assert!(matches!(load_corpus(&p), Err(OrchestratorError::Corpus(_))));
    }
}
