//! Per-example trace records, run aggregation and manifest persistence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{EvalError, Sample};
use crate::providers::CallCounts;
use crate::select::Selector;
use crate::types::{
    CandidateAnswer, Channel, Mode, PipelineConfig, SelectionResult, SubQuestionSet,
};

/// Web channel trace kept in the manifest: digests and shape, not the full
/// search payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebTraceRecord {
    pub result_counts: Vec<usize>,
    pub provenance: Vec<String>,
    pub evidence_digest: String,
    pub summary_prompt_digest: Option<String>,
    pub is_fallback: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptTraceRecord {
    pub evidence_digest: String,
    pub prompt_digest: String,
    pub is_fallback: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelTraces {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub web: Option<WebTraceRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gpt: Option<GptTraceRecord>,
}

/// Metrics for one scored example. Span questions carry em/f1, boolean
/// questions carry acc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<u8>,
    /// True when a boolean answer had no yes/no token.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub acc_unparseable: bool,
}

/// Everything recorded about one processed example. `metrics` is present
/// exactly when `error` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub question_id: String,
    pub question: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sub_questions: Option<SubQuestionSet>,
    #[serde(default)]
    pub traces: ChannelTraces,
    pub candidates: Vec<CandidateAnswer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_channel: Option<Channel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ExampleMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExampleRecord {
    pub fn errored(
        question_id: impl Into<String>,
        question: impl Into<String>,
        error: impl Into<String>,
    ) -> Self {
        Self {
            question_id: question_id.into(),
            question: question.into(),
            sub_questions: None,
            traces: ChannelTraces::default(),
            candidates: Vec::new(),
            selection: None,
            answer: None,
            answer_channel: None,
            metrics: None,
            error: Some(error.into()),
        }
    }
}

/// Aggregated metrics over one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    pub error_rate: f64,
    pub scored: usize,
    pub errored: usize,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Arithmetic means over scored records; errored records are excluded from
/// the means but counted in `error_rate`.
pub fn aggregate_run(records: &[ExampleRecord]) -> Result<RunMetrics, EvalError> {
    let mut em = Vec::new();
    let mut f1 = Vec::new();
    let mut acc = Vec::new();
    let mut errored = 0usize;

    for record in records {
        match &record.metrics {
            Some(m) => {
                if let Some(v) = m.em {
                    em.push(v as f64);
                }
                if let Some(v) = m.f1 {
                    f1.push(v);
                }
                if let Some(v) = m.acc {
                    acc.push(v as f64);
                }
            }
            None => errored += 1,
        }
    }

    let scored = records.len() - errored;
    if scored == 0 {
        return Err(EvalError::EmptyRun);
    }
    let error_rate = errored as f64 / records.len() as f64;
    Ok(RunMetrics {
        em: mean(&em),
        f1: mean(&f1),
        acc: mean(&acc),
        error_rate,
        scored,
        errored,
    })
}

/// Fieldwise mean across runs.
pub fn average_runs(runs: &[RunMetrics]) -> RunMetrics {
    let collect = |pick: fn(&RunMetrics) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = runs.iter().filter_map(pick).collect();
        mean(&values)
    };
    RunMetrics {
        em: collect(|r| r.em),
        f1: collect(|r| r.f1),
        acc: collect(|r| r.acc),
        error_rate: mean(&runs.iter().map(|r| r.error_rate).collect::<Vec<_>>()).unwrap_or(0.0),
        scored: runs.iter().map(|r| r.scored).sum::<usize>() / runs.len().max(1),
        errored: runs.iter().map(|r| r.errored).sum::<usize>() / runs.len().max(1),
    }
}

/// Issued (pipeline-side) and backend (provider-side) call counts for a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCountsRecord {
    pub issued: CallCounts,
    pub backend: CallCounts,
}

/// One run's complete trace, persisted as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `<UTC timestamp>-<config_digest[0..8]>`; excluded from determinism
    /// checks.
    pub run_id: String,
    pub created_at: u64,
    pub dataset_tag: String,
    pub mode: Mode,
    pub selector: Selector,
    pub run_index: usize,
    pub run_seed: u64,
    pub config: PipelineConfig,
    pub config_digest: String,
    pub dataset_digest: String,
    /// Down-sampling applied to the dataset before the run.
    #[serde(default)]
    pub sample: Sample,
    pub incomplete: bool,
    pub call_counts: CallCountsRecord,
    pub records: Vec<ExampleRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| EvalError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        let body = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(path, body).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let raw = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Multi-run summary for one (dataset, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset_tag: String,
    pub mode: Mode,
    pub selector: Selector,
    pub runs: usize,
    pub per_run_metrics: Vec<RunMetrics>,
    pub mean_metrics: RunMetrics,
    pub config_digest: String,
    pub dataset_digest: String,
}

impl RunReport {
    pub fn from_runs(
        dataset_tag: impl Into<String>,
        mode: Mode,
        selector: Selector,
        per_run_metrics: Vec<RunMetrics>,
        config_digest: impl Into<String>,
        dataset_digest: impl Into<String>,
    ) -> Self {
        let mean_metrics = average_runs(&per_run_metrics);
        Self {
            dataset_tag: dataset_tag.into(),
            mode,
            selector,
            runs: per_run_metrics.len(),
            per_run_metrics,
            mean_metrics,
            config_digest: config_digest.into(),
            dataset_digest: dataset_digest.into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| EvalError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        let body = serde_json::to_vec_pretty(self).expect("report serializes");
        fs::write(path, body).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let raw = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}
