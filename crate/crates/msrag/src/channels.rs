//! The three evidence/answer channels.
//!
//! Web: sub-question search fan-out, then one joint summarization call
//! producing Information-Web. Gpt: one context-generation call producing
//! Information-GPT. NoRetrieval: the bare question. Each active channel then
//! gets one reader call, yielding the candidate answers in canonical order
//! (Web, Gpt, NoRetrieval).

use serde::{Deserialize, Serialize};

use crate::decompose::{parse_segmentation_output, segment_question};
use crate::prompts;
use crate::providers::{
    ChatProvider, ChatRequest, FinishReason, ProviderError, ProviderResult, SearchProvider,
    SearchResult,
};
use crate::types::{
    AnswerKind, CandidateAnswer, Channel, EvidenceBundle, PipelineConfig, Question, SubQuestionSet,
    SubQuestionSource, FALLBACK_SENTENCE,
};

/// Token budget for internal (non-reader) chat calls.
const INTERNAL_MAX_TOKENS: u32 = 512;

/// Glue appended when segmentation and context generation share one request.
const COMBINED_FOOTER: &str = "You are doing both tasks above in one pass: \
generate the requested information, then the sub-questions. Return a single \
JSON object with the keys \"question\", \"content\", and \"sub_questions\".";

/// Everything the web channel did for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebChannelTrace {
    /// One result list per issued sub-question, in sub-question order.
    pub sub_results: Vec<Vec<SearchResult>>,
    /// Digest of the summarization prompt; absent when no call was made.
    pub summary_prompt_digest: Option<String>,
    pub information_web: EvidenceBundle,
    pub summary_truncated: bool,
}

/// The Gpt channel's context generation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptChannelTrace {
    pub prompt_digest: String,
    pub information_gpt: EvidenceBundle,
    pub truncated: bool,
}

/// Channel outputs for one example, before selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelOutcome {
    pub sub_questions: Option<SubQuestionSet>,
    pub web: Option<WebChannelTrace>,
    pub gpt: Option<GptChannelTrace>,
    /// One candidate per active channel, always in canonical channel order.
    pub candidates: Vec<CandidateAnswer>,
}

/// Truncate to at most `max_words` whitespace-separated words.
pub fn truncate_words(text: &str, max_words: usize) -> (String, bool) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        (text.trim().to_string(), false)
    } else {
        (words[..max_words].join(" "), true)
    }
}

/// One search per sub-question. Per-sub-question failures are absorbed as
/// empty result lists so a flaky query never kills the example; only a
/// replay miss in strict mode aborts.
pub fn web_search_fanout(
    subs: &SubQuestionSet,
    cfg: &PipelineConfig,
    search: &dyn SearchProvider,
) -> ProviderResult<Vec<Vec<SearchResult>>> {
    let mut all = Vec::with_capacity(subs.items.len());
    for sub in &subs.items {
        match search.search(sub, cfg.search_top_k) {
            Ok(results) => all.push(results),
            Err(miss @ ProviderError::ReplayMiss { .. }) => return Err(miss),
            Err(e) => {
                log::warn!("search failed for sub-question {sub:?}: {e}");
                all.push(Vec::new());
            }
        }
    }
    Ok(all)
}

fn results_block(subs: &SubQuestionSet, sub_results: &[Vec<SearchResult>]) -> String {
    let mut block = String::new();
    for (sub, results) in subs.items.iter().zip(sub_results) {
        block.push_str("Sub-question: ");
        block.push_str(sub);
        block.push('\n');
        for r in results {
            block.push_str(&format!("{}. {}: {}\n", r.rank, r.title, r.snippet));
        }
        block.push('\n');
    }
    block
}

/// Merge and summarize all sub-question results into Information-Web.
///
/// All-empty results skip the chat call and yield the fallback sentence.
/// Provenance lists every contributing URL in sub-question, then rank order.
pub fn summarize_web(
    question: &Question,
    subs: &SubQuestionSet,
    sub_results: &[Vec<SearchResult>],
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
) -> ProviderResult<WebChannelTrace> {
    if sub_results.iter().all(|r| r.is_empty()) {
        return Ok(WebChannelTrace {
            sub_results: sub_results.to_vec(),
            summary_prompt_digest: None,
            information_web: EvidenceBundle::web(FALLBACK_SENTENCE, Vec::new()),
            summary_truncated: false,
        });
    }

    let prompt = prompts::render(
        prompts::SUMMARIZE,
        &[
            ("question", &question.text),
            ("results", &results_block(subs, sub_results)),
        ],
    );
    let digest = prompts::prompt_digest(&prompt);
    let response = chat.chat(&ChatRequest::user(
        &cfg.chat_model,
        prompt,
        INTERNAL_MAX_TOKENS,
    ))?;

    let provenance: Vec<String> = sub_results
        .iter()
        .flatten()
        .map(|r| r.url.clone())
        .collect();

    let summary = response.content.trim();
    let (text, truncated) = if summary.is_empty() || response.finish_reason == FinishReason::Error {
        (FALLBACK_SENTENCE.to_string(), false)
    } else {
        truncate_words(summary, cfg.max_context_words)
    };

    Ok(WebChannelTrace {
        sub_results: sub_results.to_vec(),
        summary_prompt_digest: Some(digest),
        information_web: EvidenceBundle::web(text, provenance),
        summary_truncated: truncated,
    })
}

/// Extract the `content` field from a context-generation response; falls back
/// to the raw text when the response is not the requested JSON shape.
fn extract_content(raw: &str) -> String {
    let body = {
        let trimmed = raw.trim();
        if trimmed.starts_with("```") {
            match trimmed.find('\n') {
                Some(i) => trimmed[i + 1..].trim_end_matches('`').trim(),
                None => trimmed,
            }
        } else {
            trimmed
        }
    };
    if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(body) {
        if let Some(content) = map.get("content").and_then(|v| v.as_str()) {
            return content.trim().to_string();
        }
    }
    body.to_string()
}

/// Ask the chat model to generate Information-GPT for the question.
pub fn gpt_context(
    question: &Question,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
) -> ProviderResult<GptChannelTrace> {
    let prompt = prompts::render(prompts::GPT_RETRIEVAL, &[("question", &question.text)]);
    let digest = prompts::prompt_digest(&prompt);
    let response = chat.chat(&ChatRequest::user(
        &cfg.chat_model,
        prompt,
        INTERNAL_MAX_TOKENS,
    ))?;

    let content = if response.finish_reason == FinishReason::Error {
        String::new()
    } else {
        extract_content(&response.content)
    };
    let (text, truncated) = if content.is_empty() {
        (FALLBACK_SENTENCE.to_string(), false)
    } else {
        truncate_words(&content, cfg.max_context_words)
    };

    Ok(GptChannelTrace {
        prompt_digest: digest,
        information_gpt: EvidenceBundle::gpt(text, &cfg.chat_model),
        truncated,
    })
}

/// The first GPT interaction of a full run: semantic segmentation and
/// context generation share one request, and one JSON object response
/// carries both the sub-questions and the content. Either half degrades
/// independently (fallback set, fallback sentence) without failing the
/// other.
pub fn combined_first_call(
    question: &Question,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
) -> ProviderResult<(SubQuestionSet, GptChannelTrace)> {
    let gpt_part = prompts::render(prompts::GPT_RETRIEVAL, &[("question", &question.text)]);
    let seg_part = prompts::render(
        prompts::SEGMENT,
        &[
            ("question", &question.text),
            ("n", &cfg.sub_question_count.to_string()),
        ],
    );
    let prompt = format!("{gpt_part}\n{seg_part}\n{COMBINED_FOOTER}");
    let digest = prompts::prompt_digest(&prompt);
    let response = chat.chat(&ChatRequest::user(
        &cfg.chat_model,
        prompt,
        INTERNAL_MAX_TOKENS,
    ))?;

    let errored = response.finish_reason == FinishReason::Error;

    let subs = if errored {
        SubQuestionSet::fallback(question)
    } else {
        match parse_segmentation_output(&response.content, cfg.sub_question_count) {
            Ok(items) => SubQuestionSet {
                parent_id: question.id.clone(),
                items,
                source: SubQuestionSource::Model,
            },
            Err(_) => SubQuestionSet::fallback(question),
        }
    };

    let content = if errored {
        String::new()
    } else {
        extract_content(&response.content)
    };
    let (text, truncated) = if content.is_empty() {
        (FALLBACK_SENTENCE.to_string(), false)
    } else {
        truncate_words(&content, cfg.max_context_words)
    };

    Ok((
        subs,
        GptChannelTrace {
            prompt_digest: digest,
            information_gpt: EvidenceBundle::gpt(text, &cfg.chat_model),
            truncated,
        },
    ))
}

/// One reader call: evidence (if any) plus the question, with a concise
/// answer instruction and a yes/no hint for boolean questions. Fallback
/// evidence is passed through unchanged; selection arbitrates downstream.
pub fn generate_answer(
    question: &Question,
    evidence: Option<&EvidenceBundle>,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
) -> ProviderResult<CandidateAnswer> {
    let channel = evidence.map(|e| e.channel).unwrap_or(Channel::NoRetrieval);
    debug_assert!(
        evidence.is_none() || channel != Channel::NoRetrieval,
        "evidence bundles belong to retrieval channels"
    );

    let bool_hint = match question.answer_kind {
        AnswerKind::Boolean => " Answer yes or no.",
        AnswerKind::Span => "",
    };
    let prompt = match evidence {
        Some(e) => prompts::render(
            prompts::READER_WITH_CONTEXT,
            &[
                ("context", e.text.as_str()),
                ("question", &question.text),
                ("bool_hint", bool_hint),
            ],
        ),
        None => prompts::render(
            prompts::READER_DIRECT,
            &[("question", &question.text), ("bool_hint", bool_hint)],
        ),
    };
    let prompt_digest = prompts::prompt_digest(&prompt);
    let response = chat.chat(&ChatRequest::user(
        &cfg.reader_model,
        prompt,
        cfg.max_answer_tokens,
    ))?;

    Ok(CandidateAnswer {
        channel,
        text: response.content.trim().to_string(),
        prompt_digest,
    })
}

/// Run every channel the mode activates and produce one candidate per
/// channel, in canonical order regardless of execution details.
pub fn run_example_channels(
    question: &Question,
    cfg: &PipelineConfig,
    chat: &dyn ChatProvider,
    search: &dyn SearchProvider,
) -> ProviderResult<ChannelOutcome> {
    let active = cfg.mode.active_channels();
    let web_active = active.contains(&Channel::Web);
    let gpt_active = active.contains(&Channel::Gpt);

    let mut sub_questions = None;
    let mut web = None;
    let mut gpt = None;

    if web_active && gpt_active {
        // First GPT interaction does segmentation and context generation at
        // once; that keeps the full-mode budget at 5 chat calls per example.
        let (subs, trace) = combined_first_call(question, cfg, chat)?;
        gpt = Some(trace);
        let sub_results = web_search_fanout(&subs, cfg, search)?;
        web = Some(summarize_web(question, &subs, &sub_results, cfg, chat)?);
        sub_questions = Some(subs);
    } else if web_active {
        let subs = segment_question(question, cfg, chat)?;
        let sub_results = web_search_fanout(&subs, cfg, search)?;
        web = Some(summarize_web(question, &subs, &sub_results, cfg, chat)?);
        sub_questions = Some(subs);
    } else if gpt_active {
        gpt = Some(gpt_context(question, cfg, chat)?);
    }

    let mut candidates = Vec::with_capacity(active.len());
    for channel in active {
        let evidence = match channel {
            Channel::Web => web.as_ref().map(|t| &t.information_web),
            Channel::Gpt => gpt.as_ref().map(|t| &t.information_gpt),
            Channel::NoRetrieval => None,
        };
        candidates.push(generate_answer(question, evidence, cfg, chat)?);
    }

    Ok(ChannelOutcome {
        sub_questions,
        web,
        gpt,
        candidates,
    })
}
