//! Endpoints and search environment for a run, fixture or live.

use std::sync::Arc;

use anyhow::Context;
use lras_core::agent::EnvironmentPort;
use lras_core::endpoint::PolicyEndpoint;
use lras_core::fixture::FixtureBundle;
use lras_core::search::{ObservationPipeline, PipelineConfig, StageCache, SummarizeConfig};
use lras_http::{credential, ChatEndpoint, ReaderFetcher, SerpProvider, DEFAULT_TIMEOUT};

use crate::config::{AppConfig, EndpointConfig, Mode};
use crate::UsageError;

/// Which live services a subcommand talks to.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub sampler: bool,
    pub search: bool,
    pub judge: bool,
    pub rewriter: bool,
}

pub struct Stack {
    pub sampler: Arc<dyn PolicyEndpoint>,
    pub judge: Arc<dyn PolicyEndpoint>,
    pub rewriter: Arc<dyn PolicyEndpoint>,
    pub env: Arc<dyn EnvironmentPort>,
}

fn pipeline_config(cfg: &AppConfig) -> PipelineConfig {
    PipelineConfig {
        top_k: cfg.search.top_k,
        page_jobs: cfg.search.top_k,
        summarize: SummarizeConfig {
            decoding: cfg.endpoints.summarizer.profile.params(),
            ..SummarizeConfig::default()
        },
        ..PipelineConfig::default()
    }
}

impl Stack {
    pub fn build(cfg: &AppConfig, needs: Needs) -> anyhow::Result<Self> {
        match cfg.mode {
            Mode::Fixture => Self::fixture(cfg),
            Mode::Live => Self::live(cfg, needs),
        }
    }

    fn fixture(cfg: &AppConfig) -> anyhow::Result<Self> {
        let bundle = match &cfg.fixture {
            Some(path) => FixtureBundle::load(path).map_err(|e| UsageError(format!("fixture bundle: {e}")))?,
            None => FixtureBundle::builtin(),
        };
        let world = bundle.world(pipeline_config(cfg));
        Ok(Self {
            sampler: world.policy,
            judge: world.judge,
            rewriter: world.rewriter,
            env: world.env,
        })
    }

    /// Resolves every credential the subcommand needs before any work starts.
    fn live(cfg: &AppConfig, needs: Needs) -> anyhow::Result<Self> {
        let mut missing = Vec::new();
        let mut check = |used: bool, var: Option<&str>| {
            if let (true, Some(var)) = (used, var) {
                if credential(var).is_none() {
                    missing.push(var.to_string());
                }
            }
        };
        let e = &cfg.endpoints;
        check(needs.sampler, e.sampler.api_key_env.as_deref());
        check(needs.search, e.summarizer.api_key_env.as_deref());
        check(needs.search, Some(&cfg.search.api_key_env));
        check(needs.judge, e.judge.api_key_env.as_deref());
        check(needs.rewriter, e.rewriter.api_key_env.as_deref());
        if !missing.is_empty() {
            missing.dedup();
            return Err(UsageError(format!(
                "live mode needs these environment variables set: {}",
                missing.join(", ")
            ))
            .into());
        }

        let endpoint = |used: bool, ec: &EndpointConfig, role: &str| -> anyhow::Result<Arc<dyn PolicyEndpoint>> {
            if !used {
                return Ok(Arc::new(Unconfigured(role.to_string())));
            }
            let ep = ChatEndpoint::from_spec(&ec.spec(), DEFAULT_TIMEOUT)
                .map_err(|err| UsageError(format!("{role} endpoint: {err}")))?;
            Ok(Arc::new(ep))
        };
        let sampler = endpoint(needs.sampler, &e.sampler, "sampler")?;
        let judge = endpoint(needs.judge, &e.judge, "judge")?;
        let rewriter = endpoint(needs.rewriter, &e.rewriter, "rewriter")?;
        let env: Arc<dyn EnvironmentPort> = if needs.search {
            let s = &cfg.search;
            let key = credential(&s.api_key_env).context("search credential vanished")?;
            let provider = SerpProvider::new(&s.provider_url, key, s.timeout())
                .map_err(|err| UsageError(format!("search provider: {err}")))?;
            let reader_key = s.reader_key_env.as_deref().and_then(credential);
            let fetcher = ReaderFetcher::new(&s.reader_url, reader_key, s.timeout())
                .map_err(|err| UsageError(format!("reader: {err}")))?;
            let summarizer = endpoint(true, &e.summarizer, "summarizer")?;
            let cache = Arc::new(StageCache::new(std::time::Duration::from_secs(s.cache_ttl_secs)));
            Arc::new(
                ObservationPipeline::new(Arc::new(provider), Arc::new(fetcher), summarizer, pipeline_config(cfg))
                    .with_cache(cache),
            )
        } else {
            Arc::new(Unconfigured("search".into()))
        };
        Ok(Self {
            sampler,
            judge,
            rewriter,
            env,
        })
    }
}

/// Stand-in for a service the subcommand was not expected to call.
struct Unconfigured(String);

impl PolicyEndpoint for Unconfigured {
    fn generate(
        &self,
        _: &[lras_core::endpoint::ChatMessage],
        _: &lras_core::endpoint::DecodingParams,
    ) -> Result<String, lras_core::endpoint::EndpointError> {
        Err(lras_core::endpoint::EndpointError::Config(format!("{} endpoint is not configured for this command", self.0)))
    }

    fn model_id(&self) -> &str {
        &self.0
    }
}

impl EnvironmentPort for Unconfigured {
    fn observe(
        &self,
        _: &str,
        _: &str,
    ) -> Result<lras_core::trajectory::Observation, lras_core::agent::EnvError> {
        Err(lras_core::agent::EnvError::Failed(format!("{} is not configured for this command", self.0)))
    }
}
