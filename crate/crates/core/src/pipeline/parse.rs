//! Parsers for the raw LLM completions each stage produces.
//!
//! These are deliberately forgiving: malformed generations happen, so every
//! parser has a documented fallback and reports what it had to do rather than
//! aborting the claim.

use std::sync::LazyLock;

use regex::Regex;

use crate::dataset::VerdictLabel;

/// Split a segmentation completion on `|`, falling back to newlines when no
/// pipe is present. Segments are trimmed and empties dropped.
pub fn parse_segments(completion: &str) -> Vec<String> {
    let sep = if completion.contains('|') { '|' } else { '\n' };
    completion
        .split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Cap a segment list at `max`, merging the tail into the final segment.
/// Guards against degenerate over-segmentation.
pub fn cap_segments(mut segments: Vec<String>, max: usize) -> Vec<String> {
    let max = max.max(1);
    if segments.len() > max {
        let tail = segments.split_off(max - 1);
        segments.push(tail.join(" "));
    }
    segments
}

/// Align a decontextualization completion with the input segments: parse on
/// `|`, pad missing entries with the original segment text, drop extras.
/// Returns the aligned texts plus warnings for every adjustment made.
pub fn parse_decontext(completion: &str, segments: &[String]) -> (Vec<String>, Vec<String>) {
    let parsed = parse_segments(completion);
    let mut warnings = Vec::new();
    if parsed.len() != segments.len() {
        warnings.push(format!(
            "decontextualization returned {} items for {} segments; aligned by order",
            parsed.len(),
            segments.len()
        ));
    }
    let texts = segments
        .iter()
        .enumerate()
        .map(|(i, seg)| parsed.get(i).cloned().unwrap_or_else(|| seg.clone()))
        .collect();
    (texts, warnings)
}

/// Strip surrounding quotes/markup from an edit completion. Interior quotes
/// are untouched; only whole-string wrappers are removed.
pub fn strip_edit_markup(completion: &str) -> String {
    let mut text = completion.trim();
    loop {
        let stripped = strip_wrapper(text);
        if stripped == text {
            return text.to_string();
        }
        text = stripped.trim();
    }
}

fn strip_wrapper(text: &str) -> &str {
    for (open, close) in [('"', '"'), ('\'', '\''), ('`', '`'), ('<', '>')] {
        if text.len() >= 2 && text.starts_with(open) && text.ends_with(close) {
            return &text[open.len_utf8()..text.len() - close.len_utf8()];
        }
    }
    text
}

static RERANK_ID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[(\d+)\]").expect("rerank id pattern compiles"));

/// Extract the ranked identifier list from a reranker completion.
///
/// Identifiers are 1-based; out-of-range ones are ignored and duplicates keep
/// their first position. Returns 0-based indices into the passage list, in
/// output order. Empty means the output was unusable.
pub fn parse_rerank(completion: &str, num_passages: usize) -> Vec<usize> {
    let mut seen = vec![false; num_passages];
    let mut order = Vec::new();
    for cap in RERANK_ID.captures_iter(completion) {
        let Ok(id) = cap[1].parse::<usize>() else {
            continue;
        };
        if id >= 1 && id <= num_passages && !seen[id - 1] {
            seen[id - 1] = true;
            order.push(id - 1);
        }
    }
    order
}

const VERDICT_KEYWORDS: [(&str, VerdictLabel); 3] = [
    ("supported", VerdictLabel::Supported),
    ("refuted", VerdictLabel::Refuted),
    ("not enough information", VerdictLabel::NotEnoughInfo),
];

fn last_keyword(text: &str) -> Option<VerdictLabel> {
    let lower = text.to_lowercase();
    VERDICT_KEYWORDS
        .iter()
        .filter_map(|(kw, label)| lower.rfind(kw).map(|pos| (pos, *label)))
        .max_by_key(|(pos, _)| *pos)
        .map(|(_, label)| label)
}

/// Parse the verdict from an entailment completion.
///
/// Prefers the last line starting with `final rating:`; otherwise the last
/// occurrence of any verdict keyword anywhere in the text. `None` means no
/// keyword was found at all.
pub fn parse_verdict(completion: &str) -> Option<VerdictLabel> {
    let rating_line = completion
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.to_lowercase().starts_with("final rating:"));
    if let Some(line) = rating_line {
        if let Some(label) = last_keyword(line) {
            return Some(label);
        }
    }
    last_keyword(completion)
}
