//! TOML run configuration and component construction.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::condense::TemplateSet;
use crate::llm::{Cache, Gateway, HttpBackend, MockLexical, MockOracle, MockReplay};
use crate::question::{default_hop_cues, DecodingParams, HopPredictor};
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend setup failed: {0}")]
    Backend(#[from] crate::llm::LlmError),
    #[error("template setup failed: {0}")]
    Template(#[from] crate::condense::CondenseError),
}

fn default_model() -> String {
    "gpt-3.5-turbo".into()
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_backend() -> String {
    "mock-lexical".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    /// Gold relation sidecar for the mock-oracle backend.
    #[serde(default)]
    pub oracle_sidecar: Option<PathBuf>,
    /// Canned response map for the mock-replay backend.
    #[serde(default)]
    pub replay_path: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            backend: default_backend(),
            model: default_model(),
            base_url: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            cache_path: None,
            oracle_sidecar: None,
            replay_path: None,
        }
    }
}

fn default_k() -> usize {
    1
}
fn default_h() -> usize {
    3
}
fn default_variants() -> usize {
    2
}
fn default_cap() -> usize {
    50
}
fn default_predictor() -> String {
    "heuristic".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_k")]
    pub m: usize,
    #[serde(default = "default_h")]
    pub h: usize,
    /// Similar questions generated per question.
    #[serde(default = "default_variants")]
    pub variants: usize,
    #[serde(default = "default_cap")]
    pub candidate_cap: usize,
    /// "oracle", "heuristic", or "fixed:N".
    #[serde(default = "default_predictor")]
    pub hop_predictor: String,
    /// Cue phrases for the heuristic predictor; defaults ship with the
    /// binary.
    #[serde(default)]
    pub hop_cues: Option<Vec<String>>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            k: 1,
            m: 1,
            h: 3,
            variants: 2,
            candidate_cap: 50,
            hop_predictor: default_predictor(),
            hop_cues: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsSection {
    /// Per-relation verbalization overrides (`relation<TAB>template` lines).
    #[serde(default)]
    pub overrides_path: Option<PathBuf>,
    #[serde(default)]
    pub few_shot_path: Option<PathBuf>,
    /// Apply the few-shot block to the final answer prompt.
    #[serde(default = "default_true")]
    pub few_shot_answering: bool,
    /// Apply the few-shot block to relation selection; off by default.
    #[serde(default)]
    pub few_shot_selection: bool,
}

fn default_true() -> bool {
    true
}

fn default_budget() -> usize {
    4096
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Context budget in tokens (characters/4 proxy).
    #[serde(default = "default_budget")]
    pub budget: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            budget: default_budget(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub prompts: PromptsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn decoding_params(&self) -> DecodingParams {
        DecodingParams {
            model: self.llm.model.clone(),
            max_tokens: self.llm.max_tokens,
            temperature: self.llm.temperature,
        }
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let backend: Box<dyn crate::llm::Backend> = match self.llm.backend.as_str() {
            "mock-lexical" => Box::new(MockLexical),
            "mock-oracle" => {
                let path = self.llm.oracle_sidecar.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("mock-oracle requires llm.oracle_sidecar".into())
                })?;
                Box::new(MockOracle::from_sidecar(path)?)
            }
            "mock-replay" => {
                let path = self.llm.replay_path.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("mock-replay requires llm.replay_path".into())
                })?;
                Box::new(MockReplay::from_file(path)?)
            }
            "http" => {
                let base = self.llm.base_url.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("http backend requires llm.base_url".into())
                })?;
                Box::new(HttpBackend::new(base)?)
            }
            other => return Err(ConfigError::Invalid(format!("unknown backend: {other}"))),
        };
        Ok(match &self.llm.cache_path {
            Some(path) => Gateway::with_cache(backend, Cache::open(path)?),
            None => Gateway::new(backend),
        })
    }

    pub fn build_hop_predictor(&self) -> Result<HopPredictor, ConfigError> {
        let spec = self.retrieval.hop_predictor.as_str();
        if spec == "oracle" {
            Ok(HopPredictor::Oracle)
        } else if spec == "heuristic" {
            Ok(HopPredictor::Heuristic {
                cues: self
                    .retrieval
                    .hop_cues
                    .clone()
                    .unwrap_or_else(default_hop_cues),
            })
        } else if let Some(n) = spec.strip_prefix("fixed:") {
            let h: usize = n
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("bad hop_predictor: {spec}")))?;
            Ok(HopPredictor::Fixed(h))
        } else {
            Err(ConfigError::Invalid(format!(
                "unknown hop_predictor: {spec}"
            )))
        }
    }

    pub fn few_shot_block(&self) -> Result<Option<String>, ConfigError> {
        match &self.prompts.few_shot_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(Some(text))
            }
            None => Ok(None),
        }
    }

    pub fn retrieval_config(&self) -> Result<RetrievalConfig, ConfigError> {
        let few_shot = if self.prompts.few_shot_selection {
            self.few_shot_block()?
        } else {
            None
        };
        let cfg = RetrievalConfig {
            k: self.retrieval.k,
            m: self.retrieval.m,
            max_hops: self.retrieval.h,
            candidate_cap: self.retrieval.candidate_cap,
            selection_few_shot: few_shot,
            frontier_shuffle_seed: None,
        };
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn build_templates(&self) -> Result<TemplateSet, ConfigError> {
        let mut templates = TemplateSet::default();
        if let Some(path) = &self.prompts.overrides_path {
            let file = std::fs::File::open(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            templates.load_overrides(std::io::BufReader::new(file))?;
        }
        Ok(templates)
    }
}
