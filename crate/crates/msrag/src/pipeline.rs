//! Run orchestration: assemble the provider stack, process a dataset
//! (examples in parallel, results in dataset order), score the selected
//! answers and persist one manifest per run.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::canon;
use crate::channels::run_example_channels;
use crate::eval::record::CallCountsRecord;
use crate::eval::{
    aggregate_run, boolean_accuracy, exact_match, token_f1, ChannelTraces, ExampleMetrics,
    ExampleRecord, GptTraceRecord, RunManifest, RunReport, Sample, WebTraceRecord,
};
use crate::exec::{map_ordered, CancelToken};
use crate::providers::cache::{CachedChat, CachedEmbed, CachedSearch};
use crate::providers::instrument::CallCounters;
use crate::providers::mock::{HashEmbedder, MockChat, MockScript, MockSearch};
use crate::providers::policy::{ResilientChat, ResilientEmbed, ResilientSearch};
use crate::providers::{
    CacheStore, ChatProvider, CountingChat, CountingEmbed, CountingSearch, EmbeddingProvider,
    RateLimiter, RetryPolicy, SearchProvider,
};
use crate::select::{consensus_select, select_answer, Selector};
use crate::types::{AnswerKind, PipelineConfig, Question};

/// The assembled provider stack. Layering, outside in: issued-call counters,
/// cache, retry + rate limit, backend-call counters, base provider.
pub struct ProviderSet {
    pub chat: Arc<dyn ChatProvider>,
    pub search: Arc<dyn SearchProvider>,
    pub embed: Arc<dyn EmbeddingProvider>,
    /// Calls the pipeline issued (counted before the cache).
    pub issued: Arc<CallCounters>,
    /// Calls that reached the backing provider (counted after the cache).
    pub backend: Arc<CallCounters>,
}

impl ProviderSet {
    pub fn assemble(
        base_chat: Arc<dyn ChatProvider>,
        base_search: Arc<dyn SearchProvider>,
        base_embed: Arc<dyn EmbeddingProvider>,
        cfg: &PipelineConfig,
        cache: Option<Arc<CacheStore>>,
    ) -> Self {
        let issued = Arc::new(CallCounters::default());
        let backend = Arc::new(CallCounters::default());
        let policy = RetryPolicy::new(cfg.retry.clone());

        let chat: Arc<dyn ChatProvider> = Arc::new(CountingChat::new(base_chat, backend.clone()));
        let chat: Arc<dyn ChatProvider> = Arc::new(ResilientChat::new(
            chat,
            policy.clone(),
            Arc::new(RateLimiter::new(cfg.rate_limit_qps)),
        ));
        let chat: Arc<dyn ChatProvider> = match &cache {
            Some(store) => Arc::new(CachedChat::new(chat, store.clone())),
            None => chat,
        };
        let chat: Arc<dyn ChatProvider> = Arc::new(CountingChat::new(chat, issued.clone()));

        let search: Arc<dyn SearchProvider> =
            Arc::new(CountingSearch::new(base_search, backend.clone()));
        let search: Arc<dyn SearchProvider> = Arc::new(ResilientSearch::new(
            search,
            policy.clone(),
            Arc::new(RateLimiter::new(cfg.rate_limit_qps)),
        ));
        let search: Arc<dyn SearchProvider> = match &cache {
            Some(store) => Arc::new(CachedSearch::new(search, store.clone(), "search")),
            None => search,
        };
        let search: Arc<dyn SearchProvider> = Arc::new(CountingSearch::new(search, issued.clone()));

        let embed: Arc<dyn EmbeddingProvider> =
            Arc::new(CountingEmbed::new(base_embed, backend.clone()));
        let embed: Arc<dyn EmbeddingProvider> = Arc::new(ResilientEmbed::new(
            embed,
            policy,
            Arc::new(RateLimiter::new(cfg.rate_limit_qps)),
        ));
        let embed: Arc<dyn EmbeddingProvider> = match &cache {
            Some(store) => Arc::new(CachedEmbed::new(embed, store.clone(), &cfg.embed_model)),
            None => embed,
        };
        let embed: Arc<dyn EmbeddingProvider> = Arc::new(CountingEmbed::new(embed, issued.clone()));

        Self {
            chat,
            search,
            embed,
            issued,
            backend,
        }
    }

    /// Fully offline stack: deterministic mocks, optionally scripted.
    pub fn mock(
        cfg: &PipelineConfig,
        script: Option<MockScript>,
        cache: Option<Arc<CacheStore>>,
    ) -> Self {
        let chat = match script {
            Some(script) => MockChat::with_script(script),
            None => MockChat::new(),
        };
        Self::assemble(
            Arc::new(chat),
            Arc::new(MockSearch::new()),
            Arc::new(HashEmbedder::default()),
            cfg,
            cache,
        )
    }
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub selector: Selector,
    pub providers: ProviderSet,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, selector: Selector, providers: ProviderSet) -> Self {
        Self {
            cfg,
            selector,
            providers,
        }
    }

    /// Process one question end to end. Hard provider failures become an
    /// error record rather than aborting the run.
    pub fn run_example(&self, question: &Question) -> ExampleRecord {
        let outcome = match run_example_channels(
            question,
            &self.cfg,
            self.providers.chat.as_ref(),
            self.providers.search.as_ref(),
        ) {
            Ok(outcome) => outcome,
            Err(e) => return ExampleRecord::errored(&question.id, &question.text, e.to_string()),
        };

        let (selection, answer, answer_channel) = if outcome.candidates.len() == 1 {
            // Single-channel modes bypass selection.
            let only = &outcome.candidates[0];
            (None, only.text.clone(), only.channel)
        } else {
            let selected = match self.selector {
                Selector::Oracle => select_answer(
                    &outcome.candidates,
                    &question.gold_answers,
                    self.providers.embed.as_ref(),
                ),
                Selector::Consensus => {
                    consensus_select(&outcome.candidates, self.providers.embed.as_ref())
                }
            };
            match selected {
                Ok(result) => {
                    let answer = result.selected_text.clone();
                    let channel = result.selected_channel;
                    (Some(result), answer, channel)
                }
                Err(e) => {
                    return ExampleRecord::errored(&question.id, &question.text, e.to_string())
                }
            }
        };

        let metrics = match question.answer_kind {
            AnswerKind::Span => ExampleMetrics {
                em: Some(exact_match(&answer, &question.gold_answers)),
                f1: Some(token_f1(&answer, &question.gold_answers)),
                acc: None,
                acc_unparseable: false,
            },
            AnswerKind::Boolean => {
                let Some(gold) = question.gold_bool() else {
                    return ExampleRecord::errored(
                        &question.id,
                        &question.text,
                        "boolean question without normalizable gold answer",
                    );
                };
                let score = boolean_accuracy(&answer, gold);
                ExampleMetrics {
                    em: None,
                    f1: None,
                    acc: Some(score.correct),
                    acc_unparseable: !score.parseable,
                }
            }
        };

        let traces = ChannelTraces {
            web: outcome.web.as_ref().map(|t| WebTraceRecord {
                result_counts: t.sub_results.iter().map(Vec::len).collect(),
                provenance: t.information_web.provenance.clone(),
                evidence_digest: canon::sha256_hex(t.information_web.text.as_bytes()),
                summary_prompt_digest: t.summary_prompt_digest.clone(),
                is_fallback: t.information_web.is_fallback,
                truncated: t.summary_truncated,
            }),
            gpt: outcome.gpt.as_ref().map(|t| GptTraceRecord {
                evidence_digest: canon::sha256_hex(t.information_gpt.text.as_bytes()),
                prompt_digest: t.prompt_digest.clone(),
                is_fallback: t.information_gpt.is_fallback,
                truncated: t.truncated,
            }),
        };

        ExampleRecord {
            question_id: question.id.clone(),
            question: question.text.clone(),
            sub_questions: outcome.sub_questions,
            traces,
            candidates: outcome.candidates,
            selection,
            answer: Some(answer),
            answer_channel: Some(answer_channel),
            metrics: Some(metrics),
            error: None,
        }
    }

    /// One full pass over the dataset. Records come back in dataset order
    /// regardless of worker interleaving.
    pub fn run_dataset(
        &self,
        questions: &[Question],
        run_index: usize,
        workers: usize,
        cancel: &CancelToken,
    ) -> RunManifest {
        let issued_before = self.providers.issued.snapshot();
        let backend_before = self.providers.backend.snapshot();

        let results = map_ordered(questions, workers, cancel, |q| self.run_example(q));
        let incomplete = results.iter().any(Option::is_none);
        let records: Vec<ExampleRecord> = results.into_iter().flatten().collect();
        let metrics = aggregate_run(&records).ok();

        let config_digest = canon::digest_of(&self.cfg);
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs();
        let timestamp = chrono::DateTime::from_timestamp(now as i64, 0)
            .unwrap_or_default()
            .format("%Y%m%dT%H%M%SZ");

        RunManifest {
            run_id: format!("{timestamp}-{}", &config_digest[..8]),
            created_at: now,
            dataset_tag: questions
                .first()
                .map(|q| q.dataset_tag.clone())
                .unwrap_or_default(),
            mode: self.cfg.mode,
            selector: self.selector,
            run_index,
            run_seed: self.cfg.random_seed.wrapping_add(run_index as u64),
            config: self.cfg.clone(),
            config_digest,
            dataset_digest: canon::digest_of(&questions),
            sample: Sample::All,
            incomplete,
            call_counts: CallCountsRecord {
                issued: self.providers.issued.snapshot().since(issued_before),
                backend: self.providers.backend.snapshot().since(backend_before),
            },
            records,
            metrics,
        }
    }

    /// `runs` independent passes plus the averaged report.
    pub fn run_suite(
        &self,
        questions: &[Question],
        runs: usize,
        workers: usize,
        cancel: &CancelToken,
    ) -> (Vec<RunManifest>, RunReport) {
        let manifests: Vec<RunManifest> = (0..runs)
            .map(|run_index| self.run_dataset(questions, run_index, workers, cancel))
            .collect();
        let per_run: Vec<_> = manifests.iter().filter_map(|m| m.metrics.clone()).collect();
        let report = RunReport::from_runs(
            manifests
                .first()
                .map(|m| m.dataset_tag.clone())
                .unwrap_or_default(),
            self.cfg.mode,
            self.selector,
            per_run,
            manifests
                .first()
                .map(|m| m.config_digest.clone())
                .unwrap_or_default(),
            manifests
                .first()
                .map(|m| m.dataset_digest.clone())
                .unwrap_or_default(),
        );
        (manifests, report)
    }
}
