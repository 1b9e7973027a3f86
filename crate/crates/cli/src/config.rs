//! Application config: TOML file, then `LRAS_*` environment variables, then
//! flags. Clap reads the environment for every flag that has a variable, so
//! a flag value (explicit or from the environment) always beats the file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use lras_core::curation::{CurationConfig, HumanGate};
use lras_core::endpoint::DecodingParams;
use lras_core::prompts::PromptLevel;
use lras_core::search::DEFAULT_TOP_K;
use lras_core::trajectory::DEFAULT_MAX_TURNS;
use lras_http::{EndpointSpec, JINA_READER_URL, SERPAPI_URL};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Looked for in the working directory when `--config` is not given.
pub const DEFAULT_CONFIG_FILE: &str = "lras.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Greedy.
    #[default]
    Evaluation,
    /// Temperature 0.7, top-p 0.8, top-k 20.
    Sampling,
    /// Sampling numbers with thinking disabled.
    Summarizer,
}

impl Profile {
    pub fn params(self) -> DecodingParams {
        match self {
            Profile::Evaluation => DecodingParams::evaluation(),
            Profile::Sampling => DecodingParams::sampling(),
            Profile::Summarizer => DecodingParams::summarizer(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub profile: Profile,
}

impl EndpointConfig {
    pub fn spec(&self) -> EndpointSpec {
        EndpointSpec {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
        }
    }

    fn local(model: &str, profile: Profile) -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: model.into(),
            api_key_env: None,
            profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub sampler: EndpointConfig,
    pub judge: EndpointConfig,
    pub rewriter: EndpointConfig,
    pub summarizer: EndpointConfig,
}

impl Default for Endpoints {
    fn default() -> Self {
        Self {
            sampler: EndpointConfig::local("policy", Profile::Sampling),
            judge: EndpointConfig::local("judge", Profile::Evaluation),
            rewriter: EndpointConfig::local("rewriter", Profile::Evaluation),
            summarizer: EndpointConfig::local("summarizer", Profile::Summarizer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub provider_url: String,
    pub api_key_env: String,
    pub reader_url: String,
    /// Optional; the reader works without a key at lower rate limits.
    pub reader_key_env: Option<String>,
    pub top_k: usize,
    pub timeout_secs: u64,
    pub cache_ttl_secs: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            provider_url: SERPAPI_URL.into(),
            api_key_env: "SERPAPI_API_KEY".into(),
            reader_url: JINA_READER_URL.into(),
            reader_key_env: Some("JINA_API_KEY".into()),
            top_k: DEFAULT_TOP_K,
            timeout_secs: 600,
            cache_ttl_secs: 7 * 24 * 3600,
        }
    }
}

impl SearchConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSettings {
    pub max_turns: usize,
    pub force_answer: bool,
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            force_answer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSettings {
    pub n_candidates: usize,
    pub sft_discard_threshold: f64,
    pub rl_retain_threshold: f64,
    pub prompt_level: PromptLevel,
    pub human_gate: HumanGate,
}

impl Default for CurationSettings {
    fn default() -> Self {
        let c = CurationConfig::default();
        Self {
            n_candidates: c.n_candidates,
            sft_discard_threshold: c.sft_discard_threshold,
            rl_retain_threshold: c.rl_retain_threshold,
            prompt_level: c.prompt_level,
            human_gate: c.human_gate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataDirs {
    /// Where the review queue keeps its log.
    pub review_dir: PathBuf,
}

impl Default for DataDirs {
    fn default() -> Self {
        Self {
            review_dir: PathBuf::from("review"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Scripted policy and canned corpus; no network, no credentials.
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub mode: Mode,
    /// Fixture bundle path; the built-in bundle when unset.
    pub fixture: Option<PathBuf>,
    pub jobs: usize,
    pub endpoints: Endpoints,
    pub search: SearchConfig,
    #[serde(rename = "loop")]
    pub loop_settings: LoopSettings,
    pub curation: CurationSettings,
    pub data: DataDirs,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fixture,
            fixture: None,
            jobs: 1,
            endpoints: Endpoints::default(),
            search: SearchConfig::default(),
            loop_settings: LoopSettings::default(),
            curation: CurationSettings::default(),
            data: DataDirs::default(),
        }
    }
}

impl AppConfig {
    /// Reads `path`, or `lras.toml` in the working directory when present,
    /// or falls back to defaults.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let path = match path {
            Some(p) => p.to_path_buf(),
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => PathBuf::from(DEFAULT_CONFIG_FILE),
            None => return Ok(Self::default()),
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(|e| UsageError(format!("{e:#}")))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.jobs == 0 {
            return Err(UsageError("jobs must be >= 1".into()));
        }
        if self.loop_settings.max_turns == 0 {
            return Err(UsageError("loop.max_turns must be >= 1".into()));
        }
        if self.search.top_k == 0 {
            return Err(UsageError("search.top_k must be >= 1".into()));
        }
        self.curation_config()
            .validate()
            .map_err(|e| UsageError(e.to_string()))
    }

    pub fn curation_config(&self) -> CurationConfig {
        let c = &self.curation;
        CurationConfig {
            n_candidates: c.n_candidates,
            sft_discard_threshold: c.sft_discard_threshold,
            rl_retain_threshold: c.rl_retain_threshold,
            prompt_level: c.prompt_level,
            human_gate: c.human_gate,
            judge_decoding: self.endpoints.judge.profile.params(),
            rewrite_decoding: self.endpoints.rewriter.profile.params(),
            jobs: self.jobs,
            ..CurationConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = AppConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<AppConfig>(&text).unwrap(), c);
        assert_eq!(c.search.top_k, 5);
        assert_eq!(c.search.timeout_secs, 600);
        assert_eq!(c.loop_settings.max_turns, 6);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: AppConfig = toml::from_str(
            r#"
            jobs = 3
            [loop]
            max_turns = 4
            "#,
        )
        .unwrap();
        assert_eq!((c.jobs, c.loop_settings.max_turns, c.search.top_k), (3, 4, 5));
        assert!(toml::from_str::<AppConfig>("nonsense = 1").is_err());
    }
}
