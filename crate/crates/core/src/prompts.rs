//! Section markers shared by every prompt the engine sends.
//!
//! Prompts are laid out as `#Name#: value` sections so that scripted mock
//! backends can recover the fields they need without a second channel.

pub const KNOWLEDGE: &str = "#Knowledge#";
pub const QUESTION: &str = "#Question#";
pub const GROUND_TRUTH: &str = "#Ground Truth#";
pub const ANSWER: &str = "#Answer#";
pub const ANSWER_A: &str = "#Answer A#";
pub const ANSWER_B: &str = "#Answer B#";
pub const CANDIDATE: &str = "#Hallucinated Answer#";
pub const CRITIQUE: &str = "#Previous Attempt Critique#";
pub const FIRST: &str = "#First Answer#";
pub const SECOND: &str = "#Second Answer#";

/// Renders one `#Name#: value` section.
pub fn section(marker: &str, value: &str) -> String {
    format!("{marker}: {value}\n")
}

fn is_marker_line(line: &str) -> bool {
    let Some(rest) = line.strip_prefix('#') else {
        return false;
    };
    match rest.find("#:") {
        Some(end) => end > 0 && !rest[..end].contains('#'),
        None => false,
    }
}

/// Extracts the value of the first `marker` section. The value runs until the
/// next marker line or the end of the prompt and is trimmed.
pub fn extract_section(prompt: &str, marker: &str) -> Option<String> {
    let head = format!("{marker}:");
    let mut lines = prompt.lines();
    let first = loop {
        let line = lines.next()?;
        if let Some(rest) = line.strip_prefix(&head) {
            break rest.to_string();
        }
    };
    let mut out = first;
    for line in lines {
        if is_marker_line(line) {
            break;
        }
        out.push('\n');
        out.push_str(line);
    }
    Some(out.trim().to_string())
}

/// All values of a repeated section, in order.
pub fn extract_all(prompt: &str, marker: &str) -> Vec<String> {
    let head = format!("{marker}:");
    let mut found = Vec::new();
    let mut rest = prompt;
    while let Some(pos) = rest.find(&head) {
        let at_line_start = pos == 0 || rest[..pos].ends_with('\n');
        let tail = &rest[pos..];
        if at_line_start {
            if let Some(v) = extract_section(tail, marker) {
                found.push(v);
            }
        }
        rest = &rest[pos + head.len()..];
    }
    found
}
