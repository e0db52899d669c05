//! Semantic segmentation of a question into distinct sub-questions.
//!
//! The segmentation model is asked for a JSON array; parsing is deliberately
//! forgiving (JSON array, `{"sub_questions": [...]}` object, or numbered
//! lines) and any content-level failure degrades to the fallback set holding
//! the original question verbatim. Only transport-level provider errors
//! propagate.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::prompts;
use crate::providers::{ChatProvider, ChatRequest, FinishReason, ProviderResult};
use crate::types::{PipelineConfig, Question, SubQuestionSet, SubQuestionSource};

/// No sub-questions could be recovered from the model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseFailure;

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no sub-questions recoverable from segmentation output")
    }
}

impl std::error::Error for ParseFailure {}

fn numbered_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*\d+\s*[.)]\s*(.+)$").expect("static regex compiles"))
}

/// Strip a surrounding markdown code fence, if any.
fn strip_code_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    if !trimmed.starts_with("```") {
        return trimmed;
    }
    let inner = match trimmed.find('\n') {
        Some(i) => &trimmed[i + 1..],
        None => return trimmed,
    };
    match inner.rfind("```") {
        Some(end) => inner[..end].trim(),
        None => inner.trim(),
    }
}

fn strings_from_json(value: &serde_json::Value) -> Option<Vec<String>> {
    let array = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(map) => map.get("sub_questions")?.as_array()?,
        _ => return None,
    };
    Some(
        array
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect(),
    )
}

/// Extract up to `limit` distinct sub-questions from raw model output.
///
/// Accepted formats, in order of preference: a JSON array of strings, a JSON
/// object with a `sub_questions` array, numbered lines ("1. ..." / "2) ...").
/// Items are trimmed, empties dropped, duplicates collapsed
/// case-insensitively, and the list truncated to `limit`.
pub fn parse_segmentation_output(raw: &str, limit: usize) -> Result<Vec<String>, ParseFailure> {
    let body = strip_code_fence(raw);

    let candidates: Vec<String> = match serde_json::from_str::<serde_json::Value>(body) {
        Ok(value) => strings_from_json(&value).unwrap_or_default(),
        Err(_) => body
            .lines()
            .filter_map(|line| numbered_line_re().captures(line).map(|c| c[1].to_string()))
            .collect(),
    };

    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for candidate in candidates {
        let item = candidate.trim();
        if item.is_empty() {
            continue;
        }
        if seen.insert(item.to_lowercase()) {
            items.push(item.to_string());
            if items.len() == limit {
                break;
            }
        }
    }

    if items.is_empty() {
        Err(ParseFailure)
    } else {
        Ok(items)
    }
}

/// Render the segmentation prompt for a question.
pub fn segmentation_prompt(question: &Question, cfg: &PipelineConfig) -> String {
    prompts::render(
        prompts::SEGMENT,
        &[
            ("question", &question.text),
            ("n", &cfg.sub_question_count.to_string()),
        ],
    )
}

/// Segment a question into 1..=`sub_question_count` distinct sub-questions.
///
/// Total over model output: every content-level failure (unparseable output,
/// empty list, error finish) yields the fallback set. Transport errors
/// (network, replay miss) propagate.
pub fn segment_question(
    question: &Question,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
) -> ProviderResult<SubQuestionSet> {
    let prompt = segmentation_prompt(question, cfg);
    let req = ChatRequest::user(&cfg.chat_model, prompt, cfg.max_answer_tokens.max(256));
    let response = chat.chat(&req)?;

    if response.finish_reason == FinishReason::Error {
        return Ok(SubQuestionSet::fallback(question));
    }
    match parse_segmentation_output(&response.content, cfg.sub_question_count) {
        Ok(items) => Ok(SubQuestionSet {
            parent_id: question.id.clone(),
            items,
            source: SubQuestionSource::Model,
        }),
        Err(ParseFailure) => Ok(SubQuestionSet::fallback(question)),
    }
}
