//! Deterministic mock providers.
//!
//! These ship in the main artifact, selected by config, so every command and
//! test runs offline with no credentials. The chat mock routes on landmark
//! substrings of the prompt templates and can be driven by a script file that
//! pins sub-questions, evidence and per-channel answers for specific
//! questions; anything unscripted falls back to deterministic generated
//! content keyed on a digest of the prompt.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, EmbeddingVector, ProviderError,
    ProviderResult, SearchProvider, SearchResult,
};

/// Scripted behavior for one question, matched by substring against the
/// incoming prompt.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QuestionScript {
    pub question: String,
    #[serde(default)]
    pub sub_questions: Vec<String>,
    #[serde(default)]
    pub gpt_content: Option<String>,
    #[serde(default)]
    pub web_summary: Option<String>,
    #[serde(default)]
    pub web_answer: Option<String>,
    #[serde(default)]
    pub gpt_answer: Option<String>,
    #[serde(default)]
    pub direct_answer: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub questions: Vec<QuestionScript>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let raw = fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn entry_for(&self, prompt: &str) -> Option<&QuestionScript> {
        self.questions
            .iter()
            .find(|entry| prompt.contains(&entry.question))
    }
}

fn short_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(&hasher.finalize()[..4])
}

/// Everything after the last "Question:" line, used by the unscripted paths
/// to key generated content on the actual question.
fn question_tail(prompt: &str) -> &str {
    prompt
        .rfind("Question:")
        .map(|i| prompt[i + "Question:".len()..].trim())
        .unwrap_or_else(|| prompt.trim())
}

/// Landmark substrings of the prompt templates; the mock routes on them.
mod markers {
    pub const SEGMENT: &str = "non-repetitive sub-questions";
    pub const SUMMARIZE: &str = "Summarize the search results";
    pub const GPT_RETRIEVAL: &str = "at least 70 words";
    pub const READER: &str = "Answer concisely";
    pub const READER_CONTEXT: &str = "Context:";
}

#[derive(Default)]
pub struct MockChat {
    script: MockScript,
}

impl MockChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script(script: MockScript) -> Self {
        Self { script }
    }

    fn segmentation_response(&self, prompt: &str) -> String {
        if let Some(entry) = self.script.entry_for(prompt) {
            if !entry.sub_questions.is_empty() {
                return serde_json::to_string(&entry.sub_questions).expect("strings serialize");
            }
        }
        let q = question_tail(prompt);
        let subs = [
            format!("What entities are central to: {q}"),
            format!("What key fact links those entities in: {q}"),
            format!("Which attribute finally answers: {q}"),
        ];
        serde_json::to_string(&subs).expect("strings serialize")
    }

    fn summary_response(&self, prompt: &str) -> String {
        if let Some(entry) = self.script.entry_for(prompt) {
            if let Some(summary) = &entry.web_summary {
                return summary.clone();
            }
        }
        format!(
            "Combined evidence from the retrieved snippets [sig {}].",
            short_digest(prompt)
        )
    }

    fn gpt_retrieval_response(&self, prompt: &str) -> String {
        let (question, content) = match self.script.entry_for(prompt) {
            Some(entry) => {
                let content = entry.gpt_content.clone().unwrap_or_else(|| {
                    format!("Generated background [sig {}].", short_digest(prompt))
                });
                (entry.question.clone(), content)
            }
            None => (
                question_tail(prompt).to_string(),
                format!("Generated background [sig {}].", short_digest(prompt)),
            ),
        };
        serde_json::json!({ "question": question, "content": content }).to_string()
    }

    /// Segmentation and context generation asked for in a single request.
    fn combined_response(&self, prompt: &str) -> String {
        let entry = self.script.entry_for(prompt);
        let question = entry
            .map(|e| e.question.clone())
            .unwrap_or_else(|| question_tail(prompt).to_string());
        let content = entry
            .and_then(|e| e.gpt_content.clone())
            .unwrap_or_else(|| format!("Generated background [sig {}].", short_digest(prompt)));
        let sub_questions: Vec<String> = match entry {
            Some(e) if !e.sub_questions.is_empty() => e.sub_questions.clone(),
            _ => {
                let q = question_tail(prompt);
                vec![
                    format!("What entities are central to: {q}"),
                    format!("What key fact links those entities in: {q}"),
                    format!("Which attribute finally answers: {q}"),
                ]
            }
        };
        serde_json::json!({
            "question": question,
            "content": content,
            "sub_questions": sub_questions,
        })
        .to_string()
    }

    fn reader_response(&self, prompt: &str) -> String {
        let with_context = prompt.contains(markers::READER_CONTEXT);
        if let Some(entry) = self.script.entry_for(prompt) {
            if with_context {
                if let Some(summary) = &entry.web_summary {
                    if prompt.contains(summary.as_str()) {
                        if let Some(answer) = &entry.web_answer {
                            return answer.clone();
                        }
                    }
                }
                if let Some(content) = &entry.gpt_content {
                    if prompt.contains(content.as_str()) {
                        if let Some(answer) = &entry.gpt_answer {
                            return answer.clone();
                        }
                    }
                }
            } else if let Some(answer) = &entry.direct_answer {
                return answer.clone();
            }
        }
        format!("mock answer [sig {}]", short_digest(prompt))
    }
}

impl ChatProvider for MockChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        req.validate()?;
        let prompt: String = req
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let segment = prompt.contains(markers::SEGMENT);
        let retrieval = prompt.contains(markers::GPT_RETRIEVAL);
        let content = if segment && retrieval {
            self.combined_response(&prompt)
        } else if segment {
            self.segmentation_response(&prompt)
        } else if prompt.contains(markers::SUMMARIZE) {
            self.summary_response(&prompt)
        } else if retrieval {
            self.gpt_retrieval_response(&prompt)
        } else if prompt.contains(markers::READER) {
            self.reader_response(&prompt)
        } else {
            format!("mock response [sig {}]", short_digest(&prompt))
        };
        Ok(ChatResponse::stop(content))
    }
}

/// Chat provider from a closure; handy for fixtures and failure injection.
pub struct FnChat<F>(pub F);

impl<F> ChatProvider for FnChat<F>
where
    F: Fn(&ChatRequest) -> ProviderResult<ChatResponse> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        req.validate()?;
        (self.0)(req)
    }
}

pub struct FnSearch<F>(pub F);

impl<F> SearchProvider for FnSearch<F>
where
    F: Fn(&str, usize) -> ProviderResult<Vec<SearchResult>> + Send + Sync,
{
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        (self.0)(query, k)
    }
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
        if out.len() >= 40 {
            break;
        }
    }
    out.trim_matches('-').to_string()
}

/// Deterministic search: snippets are a pure function of (query, rank).
/// Specific queries can be pinned to fixture results.
#[derive(Default)]
pub struct MockSearch {
    scripted: BTreeMap<String, Vec<SearchResult>>,
}

impl MockSearch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_results(scripted: BTreeMap<String, Vec<SearchResult>>) -> Self {
        Self { scripted }
    }
}

impl SearchProvider for MockSearch {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        if let Some(results) = self.scripted.get(query) {
            return Ok(results.iter().take(k).cloned().collect());
        }
        let results = (1..=k as u32)
            .map(|rank| SearchResult {
                query: query.to_string(),
                rank,
                title: format!("Result {rank} for {query}"),
                snippet: format!("Snippet {rank} for query '{query}'."),
                url: format!("https://search.invalid/{}/{rank}", slug(query)),
            })
            .collect();
        Ok(results)
    }
}

fn bow_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Bag-of-words embedder over a fixed vocabulary: component i counts
/// occurrences of vocabulary word i, so token order never matters.
/// Out-of-vocabulary tokens are ignored.
pub struct BagOfWordsEmbedder {
    vocab: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl BagOfWordsEmbedder {
    pub fn new<I, S>(vocab: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: Vec<String> = vocab.into_iter().map(|s| s.into().to_lowercase()).collect();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { vocab, index }
    }

    /// Vocabulary built from every token of the given corpus, in first-seen
    /// order.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vec::new();
        let mut index = BTreeMap::new();
        for text in texts {
            for token in bow_tokens(text) {
                if !index.contains_key(&token) {
                    index.insert(token.clone(), vocab.len());
                    vocab.push(token);
                }
            }
        }
        Self { vocab, index }
    }
}

impl EmbeddingProvider for BagOfWordsEmbedder {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        let mut values = vec![0.0; self.vocab.len()];
        for token in bow_tokens(text) {
            if let Some(&i) = self.index.get(&token) {
                values[i] += 1.0;
            }
        }
        Ok(EmbeddingVector {
            values,
            model_id: "mock-bow".into(),
        })
    }

    fn dimension(&self) -> usize {
        self.vocab.len()
    }
}

fn hash_normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Exact-match embedder: each distinct normalized string maps to its own
/// deterministic pseudo-random unit vector, so cosine similarity is 1 exactly
/// when normalized strings are equal and well below 1 otherwise.
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        let normalized = hash_normalize(text);
        if normalized.is_empty() {
            return Ok(EmbeddingVector::zero(self.dim, "mock-hash"));
        }
        let digest = Sha256::digest(normalized.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..self.dim)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Ok(EmbeddingVector {
            values,
            model_id: "mock-hash".into(),
        })
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

/// Embedder backed by an explicit text-to-vector table; unknown text maps to
/// the zero vector.
pub struct TableEmbedder {
    pub table: BTreeMap<String, Vec<f64>>,
    pub dim: usize,
}

impl EmbeddingProvider for TableEmbedder {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        match self.table.get(text) {
            Some(values) if values.len() == self.dim => Ok(EmbeddingVector {
                values: values.clone(),
                model_id: "mock-table".into(),
            }),
            Some(values) => Err(ProviderError::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            }),
            None => Ok(EmbeddingVector::zero(self.dim, "mock-table")),
        }
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}
