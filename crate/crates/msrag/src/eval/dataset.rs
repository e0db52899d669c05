//! Dataset ingestion: JSON-lines files in the HotpotQA, 2WikiMultiHopQA,
//! StrategyQA or generic schemas, with optional first-N or seeded random
//! sampling.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::types::{AnswerKind, CoreError, Question};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("schema error at {path} line {line}: missing or invalid field {field:?}")]
    Schema {
        path: String,
        line: usize,
        field: &'static str,
    },
    #[error("invalid record at {path} line {line}: {source}")]
    InvalidRecord {
        path: String,
        line: usize,
        #[source]
        source: CoreError,
    },
    #[error("run produced zero scored records")]
    EmptyRun,
}

/// Supported input schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSchema {
    Hotpot,
    TwoWiki,
    StrategyQa,
    Generic,
}

impl DatasetSchema {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_lowercase().as_str() {
            "hotpot" | "hotpotqa" => Some(DatasetSchema::Hotpot),
            "2wiki" | "twowiki" | "2wikimultihopqa" => Some(DatasetSchema::TwoWiki),
            "strategyqa" => Some(DatasetSchema::StrategyQa),
            "generic" => Some(DatasetSchema::Generic),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DatasetSchema::Hotpot => "hotpot",
            DatasetSchema::TwoWiki => "2wiki",
            DatasetSchema::StrategyQa => "strategyqa",
            DatasetSchema::Generic => "generic",
        }
    }
}

impl fmt::Display for DatasetSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Optional down-sampling of a loaded dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Sample {
    #[default]
    All,
    /// First n records in file order.
    First(usize),
    /// n records chosen by a seeded shuffle, kept in file order.
    Random { n: usize, seed: u64 },
}

fn str_field<'a>(
    record: &'a Value,
    names: &[&'static str],
    path: &str,
    line: usize,
) -> Result<&'a str, EvalError> {
    for name in names {
        if let Some(value) = record.get(*name).and_then(Value::as_str) {
            return Ok(value);
        }
    }
    Err(EvalError::Schema {
        path: path.to_string(),
        line,
        field: names[0],
    })
}

fn alias_list(record: &Value) -> Vec<String> {
    for key in ["aliases", "answer_aliases"] {
        if let Some(items) = record.get(key).and_then(Value::as_array) {
            return items
                .iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect();
        }
    }
    Vec::new()
}

fn question_from_record(
    record: &Value,
    schema: DatasetSchema,
    tag: &str,
    path: &str,
    line: usize,
) -> Result<Question, EvalError> {
    let question_text = str_field(record, &["question"], path, line)?;
    let (id, golds, kind) = match schema {
        DatasetSchema::Hotpot | DatasetSchema::TwoWiki => {
            let id = str_field(record, &["_id", "id"], path, line)?;
            let answer = str_field(record, &["answer"], path, line)?;
            let mut golds = vec![answer.to_string()];
            golds.extend(alias_list(record));
            (id.to_string(), golds, AnswerKind::Span)
        }
        DatasetSchema::StrategyQa => {
            let id = str_field(record, &["qid", "id"], path, line)?;
            let answer =
                record
                    .get("answer")
                    .and_then(Value::as_bool)
                    .ok_or(EvalError::Schema {
                        path: path.to_string(),
                        line,
                        field: "answer",
                    })?;
            (
                id.to_string(),
                vec![if answer { "yes" } else { "no" }.to_string()],
                AnswerKind::Boolean,
            )
        }
        DatasetSchema::Generic => {
            let id = str_field(record, &["id"], path, line)?;
            if let Some(answers) = record.get("answers").and_then(Value::as_array) {
                let golds: Vec<String> = answers
                    .iter()
                    .filter_map(|v| v.as_str().map(str::to_string))
                    .collect();
                if golds.is_empty() {
                    return Err(EvalError::Schema {
                        path: path.to_string(),
                        line,
                        field: "answers",
                    });
                }
                (id.to_string(), golds, AnswerKind::Span)
            } else if let Some(answer) = record.get("answer").and_then(Value::as_bool) {
                (
                    id.to_string(),
                    vec![if answer { "yes" } else { "no" }.to_string()],
                    AnswerKind::Boolean,
                )
            } else {
                return Err(EvalError::Schema {
                    path: path.to_string(),
                    line,
                    field: "answers",
                });
            }
        }
    };

    Question::new(id, question_text, golds, kind, tag).map_err(|source| EvalError::InvalidRecord {
        path: path.to_string(),
        line,
        source,
    })
}

/// Load a JSON-lines dataset. Blank lines are skipped; every other line must
/// be one JSON record of the given schema.
pub fn load_dataset(
    path: &Path,
    schema: DatasetSchema,
    tag: &str,
    sample: Sample,
) -> Result<Vec<Question>, EvalError> {
    let display = path.display().to_string();
    let raw = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;

    let mut questions = Vec::new();
    for (index, text) in raw.lines().enumerate() {
        let line = index + 1;
        if text.trim().is_empty() {
            continue;
        }
        let record: Value = serde_json::from_str(text).map_err(|e| EvalError::Parse {
            path: display.clone(),
            line,
            message: e.to_string(),
        })?;
        questions.push(question_from_record(&record, schema, tag, &display, line)?);
    }

    Ok(apply_sample(questions, sample))
}

fn apply_sample(questions: Vec<Question>, sample: Sample) -> Vec<Question> {
    match sample {
        Sample::All => questions,
        Sample::First(n) => questions.into_iter().take(n).collect(),
        Sample::Random { n, seed } => {
            if n >= questions.len() {
                return questions;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut indices: Vec<usize> = (0..questions.len()).collect();
            indices.shuffle(&mut rng);
            let mut keep: Vec<usize> = indices.into_iter().take(n).collect();
            // Record order stays dataset order.
            keep.sort_unstable();
            let mut by_index: Vec<Option<Question>> = questions.into_iter().map(Some).collect();
            keep.into_iter()
                .filter_map(|i| by_index[i].take())
                .collect()
        }
    }
}
