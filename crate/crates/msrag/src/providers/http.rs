//! HTTP provider implementations.
//!
//! Chat speaks the OpenAI-compatible `/chat/completions` shape; search and
//! embedding speak the generic JSON schemas documented in the README, with
//! adapters for concrete engines expected to live server-side. Auth tokens
//! arrive as `Authorization: Bearer` headers when configured.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider, EmbeddingVector, FinishReason,
    ProviderError, ProviderResult, Role, SearchProvider, SearchResult,
};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(true)
        .build()
        .into()
}

fn map_http_error(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::StatusCode(429) => ProviderError::QuotaExceeded("http status 429".into()),
        ureq::Error::StatusCode(code) if (400..500).contains(&code) => {
            ProviderError::Refusal(format!("http status {code}"))
        }
        ureq::Error::StatusCode(code) => ProviderError::Network(format!("http status {code}")),
        other => ProviderError::Network(other.to_string()),
    }
}

fn post_json<B: serde::Serialize, T: serde::de::DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    token: Option<&str>,
    body: &B,
) -> ProviderResult<T> {
    let mut request = agent.post(url);
    if let Some(token) = token {
        request = request.header("Authorization", &format!("Bearer {token}"));
    }
    let mut response = request.send_json(body).map_err(map_http_error)?;
    response
        .body_mut()
        .read_json::<T>()
        .map_err(|e| ProviderError::Network(format!("invalid response body: {e}")))
}

pub struct HttpChat {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    #[serde(default)]
    content: String,
}

impl HttpChat {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        Self {
            base_url: base_url.into(),
            token,
            agent: agent(Duration::from_secs(60)),
        }
    }
}

impl ChatProvider for HttpChat {
    fn chat(&self, req: &ChatRequest) -> ProviderResult<ChatResponse> {
        req.validate()?;
        let messages: Vec<_> = req
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": match m.role { Role::System => "system", Role::User => "user" },
                    "content": m.content,
                })
            })
            .collect();
        let body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let parsed: ChatCompletionResponse =
            post_json(&self.agent, &url, self.token.as_deref(), &body)?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Refusal("chat response has no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        Ok(ChatResponse {
            content: choice.message.content,
            finish_reason,
        })
    }
}

pub struct HttpSearch {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    results: Vec<SearchResponseItem>,
}

#[derive(Deserialize)]
struct SearchResponseItem {
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
    #[serde(default)]
    url: String,
}

impl HttpSearch {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        Self {
            base_url: base_url.into(),
            token,
            agent: agent(Duration::from_secs(30)),
        }
    }
}

impl SearchProvider for HttpSearch {
    fn search(&self, query: &str, k: usize) -> ProviderResult<Vec<SearchResult>> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let body = json!({ "query": query, "k": k });
        let parsed: SearchResponse =
            post_json(&self.agent, &self.base_url, self.token.as_deref(), &body)?;
        Ok(parsed
            .results
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, item)| SearchResult {
                query: query.to_string(),
                rank: i as u32 + 1,
                title: item.title,
                snippet: item.snippet,
                url: item.url,
            })
            .collect())
    }
}

pub struct HttpEmbed {
    base_url: String,
    token: Option<String>,
    model_id: String,
    dim: usize,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl HttpEmbed {
    pub fn new(
        base_url: impl Into<String>,
        token: Option<String>,
        model_id: impl Into<String>,
        dim: usize,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            token,
            model_id: model_id.into(),
            dim,
            agent: agent(Duration::from_secs(30)),
        }
    }
}

impl EmbeddingProvider for HttpEmbed {
    fn embed(&self, text: &str) -> ProviderResult<EmbeddingVector> {
        if text.trim().is_empty() {
            return Ok(EmbeddingVector::zero(self.dim, self.model_id.clone()));
        }
        let body = json!({ "text": text, "model": self.model_id });
        let parsed: EmbedResponse =
            post_json(&self.agent, &self.base_url, self.token.as_deref(), &body)?;
        if parsed.vector.len() != self.dim {
            return Err(ProviderError::DimensionMismatch {
                expected: self.dim,
                actual: parsed.vector.len(),
            });
        }
        if parsed.vector.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Network(
                "embedding contains non-finite values".into(),
            ));
        }
        Ok(EmbeddingVector {
            values: parsed.vector,
            model_id: self.model_id.clone(),
        })
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}
