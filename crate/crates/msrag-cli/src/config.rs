//! CLI configuration: a JSON config file merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use msrag::eval::DatasetSchema;
use msrag::providers::cache::{CacheMode, CacheStore};
use msrag::providers::http::{HttpChat, HttpEmbed, HttpSearch};
use msrag::providers::mock::MockScript;
use msrag::{PipelineConfig, ProviderSet, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    Mock,
    Http,
}

impl ProviderChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mock" => Some(ProviderChoice::Mock),
            "http" => Some(ProviderChoice::Http),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub schema: DatasetSchema,
    #[serde(default)]
    pub tag: Option<String>,
}

impl DatasetSpec {
    /// Explicit tag, or the file stem as a default.
    pub fn tag(&self) -> String {
        self.tag.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub providers: ProviderChoice,
    /// Script file pinning mock responses per question (mock providers only).
    pub mock_script: Option<PathBuf>,
    pub out: PathBuf,
    pub datasets: Vec<DatasetSpec>,
    pub selector: Selector,
    /// 0 means the default thread count.
    pub workers: usize,
    pub sample_n: Option<usize>,
    /// When set together with sample_n, sampling is seeded-random instead of
    /// first-N.
    pub sample_seed: Option<u64>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            providers: ProviderChoice::Mock,
            mock_script: None,
            out: PathBuf::from("out"),
            datasets: Vec::new(),
            selector: Selector::Oracle,
            workers: 0,
            sample_n: None,
            sample_seed: None,
        }
    }
}

impl CliConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        serde_json::from_str(&raw)
            .with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn sample(&self) -> msrag::eval::Sample {
        match (self.sample_n, self.sample_seed) {
            (Some(n), Some(seed)) => msrag::eval::Sample::Random { n, seed },
            (Some(n), None) => msrag::eval::Sample::First(n),
            (None, _) => msrag::eval::Sample::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline
            .validate()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.mock_script.is_some() && self.providers != ProviderChoice::Mock {
            bail!("mock_script is only meaningful with providers = mock");
        }
        if let Some(script) = &self.mock_script {
            if !script.is_file() {
                bail!("mock_script {} does not exist", script.display());
            }
        }
        Ok(())
    }

    fn cache(&self) -> Result<Option<std::sync::Arc<CacheStore>>> {
        let Some(dir) = &self.pipeline.cache_dir else {
            return Ok(None);
        };
        let mode = if self.pipeline.replay_strict {
            CacheMode::ReplayStrict
        } else {
            CacheMode::Record
        };
        let store = CacheStore::new(dir, mode)
            .with_context(|| format!("cannot open cache directory {}", dir.display()))?;
        Ok(Some(std::sync::Arc::new(store)))
    }

    /// Assemble the provider stack this config describes.
    pub fn build_providers(&self) -> Result<ProviderSet> {
        let cache = self.cache()?;
        match self.providers {
            ProviderChoice::Mock => {
                let script =
                    match &self.mock_script {
                        Some(path) => Some(MockScript::from_file(path).with_context(|| {
                            format!("cannot load mock script {}", path.display())
                        })?),
                        None => None,
                    };
                Ok(ProviderSet::mock(&self.pipeline, script, cache))
            }
            ProviderChoice::Http => {
                let p = &self.pipeline;
                let chat = HttpChat::new(&p.chat_base_url, std::env::var("MSRAG_CHAT_TOKEN").ok());
                let search =
                    HttpSearch::new(&p.search_base_url, std::env::var("MSRAG_SEARCH_TOKEN").ok());
                let embed = HttpEmbed::new(
                    &p.embed_base_url,
                    std::env::var("MSRAG_EMBED_TOKEN").ok(),
                    &p.embed_model,
                    p.embed_dim,
                );
                Ok(ProviderSet::assemble(
                    std::sync::Arc::new(chat),
                    std::sync::Arc::new(search),
                    std::sync::Arc::new(embed),
                    p,
                    cache,
                ))
            }
        }
    }
}
