//! Search environment: web search, page extraction and query-focused
//! summarization, packaged as [`Observation`]s.
//!
//! Provider and fetcher are ports; the HTTP implementations live in a
//! separate crate and [`CannedCorpus`] serves hermetic runs.

mod cache;
pub mod corpus;
pub mod html;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, normalize_query, CacheEntry, CacheError, Stage, StageCache, DEFAULT_TTL};
pub use corpus::{CannedCorpus, CannedPage, CannedQuery, CorpusCounters};

use crate::agent::{EnvError, EnvironmentPort};
use crate::clock::{Clock, SystemClock};
use crate::endpoint::{ChatMessage, DecodingParams, PolicyEndpoint, RetryPolicy};
use crate::prompts::{render_summarization, UNRELATED_SENTINEL};
use crate::trajectory::{Observation, SourceRecord};

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MAX_CONTENT_CHARS: usize = 20_000;
pub const DEFAULT_DEGRADED_EXCERPT_CHARS: usize = 1_500;

/// Observation text when the provider returned no hits.
pub const NO_RESULTS: &str = "No search results were found for this query.";
/// Observation text when every page was skipped or judged unrelated.
pub const NO_RELEVANT_INFORMATION: &str = "No relevant information found for this query.";
/// Observation text when the search provider itself failed.
pub const SEARCH_UNAVAILABLE: &str = "The search service is unavailable; no information could be retrieved for this query.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    pub rank: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("search provider returned no results")]
    EmptyResults,
    #[error("search provider timed out")]
    Timeout,
    #[error("search quota exhausted: {0}")]
    Quota(String),
    #[error("search provider error: {0}")]
    Provider(String),
}

pub trait SearchProvider: Send + Sync {
    /// Raw provider call. Results need not be sorted or trimmed.
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchResult>, SearchError>;
}

/// Rank-ordered, at most `top_k` results with ranks renumbered from 1.
pub fn web_search(
    provider: &dyn SearchProvider,
    query: &str,
    top_k: usize,
) -> Result<Vec<SearchResult>, SearchError> {
    if query.trim().is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    let mut hits = provider.search(query.trim(), top_k)?;
    hits.sort_by_key(|h| h.rank);
    hits.truncate(top_k);
    if hits.is_empty() {
        return Err(SearchError::EmptyResults);
    }
    for (i, h) in hits.iter_mut().enumerate() {
        h.rank = i as u32 + 1;
    }
    Ok(hits)
}

/// Bytes as fetched, before extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub url: String,
    pub content_type: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FetchError {
    #[error("fetch timed out")]
    Timeout,
    #[error("fetch failed: {0}")]
    Failed(String),
    #[error("extraction service failed: {0}")]
    Service(String),
}

pub trait PageFetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedPage {
    pub url: String,
    #[serde(default)]
    pub title: Option<String>,
    pub text: String,
    pub fetched_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    InvalidUrl,
    FetchTimeout,
    FetchFailed,
    NonText,
    ExtractionFailed,
    EmptyContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("skipped {url}: {reason:?} {detail}")]
pub struct SkippedPage {
    pub url: String,
    pub reason: SkipReason,
    #[serde(default)]
    pub detail: String,
}

fn skipped(url: &str, reason: SkipReason, detail: impl Into<String>) -> SkippedPage {
    SkippedPage {
        url: url.to_string(),
        reason,
        detail: detail.into(),
    }
}

/// Fetches `url` and reduces it to boilerplate-free text.
pub fn extract_content(
    fetcher: &dyn PageFetcher,
    url: &str,
    clock: &dyn Clock,
) -> Result<ExtractedPage, SkippedPage> {
    match url::Url::parse(url) {
        Ok(u) if matches!(u.scheme(), "http" | "https") => {}
        Ok(u) => return Err(skipped(url, SkipReason::InvalidUrl, format!("scheme {}", u.scheme()))),
        Err(e) => return Err(skipped(url, SkipReason::InvalidUrl, e.to_string())),
    }
    let raw = fetcher.fetch(url).map_err(|e| match e {
        FetchError::Timeout => skipped(url, SkipReason::FetchTimeout, ""),
        FetchError::Failed(d) => skipped(url, SkipReason::FetchFailed, d),
        FetchError::Service(d) => skipped(url, SkipReason::ExtractionFailed, d),
    })?;
    let mime = raw
        .content_type
        .split(';')
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase();
    let is_html = mime == "text/html" || mime == "application/xhtml+xml";
    let is_text = is_html || mime.starts_with("text/") || mime.is_empty();
    if !is_text || raw.body.contains(&0) {
        return Err(skipped(url, SkipReason::NonText, mime));
    }
    let body = String::from_utf8(raw.body)
        .map_err(|_| skipped(url, SkipReason::NonText, "body is not UTF-8"))?;
    let (title, text) = if is_html {
        (html::extract_title(&body), html::html_to_text(&body))
    } else {
        let text = body
            .lines()
            .map(str::trim_end)
            .collect::<Vec<_>>()
            .join("\n")
            .trim()
            .to_string();
        (None, text)
    };
    if text.trim().is_empty() {
        return Err(skipped(url, SkipReason::EmptyContent, ""));
    }
    Ok(ExtractedPage {
        url: url.to_string(),
        title,
        text,
        fetched_at_ms: clock.now_ms(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub original_question: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "text", rename_all = "snake_case")]
pub enum SummaryOutcome {
    Relevant(String),
    Unrelated,
    /// Summarizer failed; the text is a raw excerpt of the page.
    Degraded(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SummaryError {
    #[error("summary request has empty {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeConfig {
    pub decoding: DecodingParams,
    pub max_content_chars: usize,
    pub degraded_excerpt_chars: usize,
    pub retry: RetryPolicy,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            decoding: DecodingParams::summarizer(),
            max_content_chars: DEFAULT_MAX_CONTENT_CHARS,
            degraded_excerpt_chars: DEFAULT_DEGRADED_EXCERPT_CHARS,
            retry: RetryPolicy::default(),
        }
    }
}

fn truncate_chars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// True when a summarizer reply is the "unrelated" sentinel.
pub fn is_unrelated(summary: &str) -> bool {
    summary.contains(UNRELATED_SENTINEL)
}

pub fn summarize(
    request: &SummaryRequest,
    summarizer: &dyn PolicyEndpoint,
    config: &SummarizeConfig,
) -> Result<SummaryOutcome, SummaryError> {
    if request.original_question.trim().is_empty() {
        return Err(SummaryError::EmptyInput("original_question"));
    }
    if request.content.trim().is_empty() {
        return Err(SummaryError::EmptyInput("content"));
    }
    let content = truncate_chars(&request.content, config.max_content_chars);
    let prompt = render_summarization(&request.original_question, content);
    let messages = [ChatMessage::user(prompt)];
    match config.retry.run(|| summarizer.generate(&messages, &config.decoding)) {
        Ok(out) if is_unrelated(&out) => Ok(SummaryOutcome::Unrelated),
        Ok(out) if !out.trim().is_empty() => Ok(SummaryOutcome::Relevant(out.trim().to_string())),
        Ok(_) => Ok(degraded(content, config)),
        Err(e) => {
            tracing::warn!(error = %e, "summarizer failed, using raw excerpt");
            Ok(degraded(content, config))
        }
    }
}

fn degraded(content: &str, config: &SummarizeConfig) -> SummaryOutcome {
    SummaryOutcome::Degraded(truncate_chars(content, config.degraded_excerpt_chars).trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PageStatus {
    Relevant,
    Degraded,
    Unrelated,
    Skipped { reason: SkipReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageOutcome {
    pub rank: u32,
    pub url: String,
    pub title: String,
    #[serde(flatten)]
    pub status: PageStatus,
}

/// An observation plus what happened to each page on the way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationReport {
    pub observation: Observation,
    pub pages: Vec<PageOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub top_k: usize,
    pub summarize: SummarizeConfig,
    /// Pages of one observation processed concurrently.
    pub page_jobs: usize,
    /// Inject a "search unavailable" observation on provider failure instead
    /// of failing the rollout.
    pub degrade_on_provider_error: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            summarize: SummarizeConfig::default(),
            page_jobs: DEFAULT_TOP_K,
            degrade_on_provider_error: true,
        }
    }
}

/// Attribution line put in front of each page summary.
pub fn attribution(title: &str) -> String {
    format!("【source: {title}】")
}

pub struct ObservationPipeline {
    provider: Arc<dyn SearchProvider>,
    fetcher: Arc<dyn PageFetcher>,
    summarizer: Arc<dyn PolicyEndpoint>,
    cache: Option<Arc<StageCache>>,
    clock: Arc<dyn Clock>,
    config: PipelineConfig,
}

impl ObservationPipeline {
    pub fn new(
        provider: Arc<dyn SearchProvider>,
        fetcher: Arc<dyn PageFetcher>,
        summarizer: Arc<dyn PolicyEndpoint>,
        config: PipelineConfig,
    ) -> Self {
        Self {
            provider,
            fetcher,
            summarizer,
            cache: None,
            clock: Arc::new(SystemClock),
            config,
        }
    }

    pub fn with_cache(mut self, cache: Arc<StageCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn cached<T, E>(
        &self,
        stage: Stage,
        subject: &str,
        question: &str,
        compute: impl FnOnce() -> Result<T, E>,
        keep: impl Fn(&T) -> bool,
    ) -> Result<T, E>
    where
        T: Serialize + for<'de> Deserialize<'de>,
    {
        let Some(cache) = &self.cache else {
            return compute();
        };
        let key = cache_key(stage, subject, question);
        if let Some(hit) = cache.get_json::<T>(&key) {
            return Ok(hit);
        }
        let value = compute()?;
        if keep(&value) {
            cache.put_json(key, &value);
        }
        Ok(value)
    }

    fn page(&self, hit: &SearchResult, question: &str) -> (PageOutcome, Option<String>) {
        let outcome = |status| PageOutcome {
            rank: hit.rank,
            url: hit.url.clone(),
            title: hit.title.clone(),
            status,
        };
        let page = self.cached(
            Stage::Extract,
            &hit.url,
            "",
            || extract_content(self.fetcher.as_ref(), &hit.url, self.clock.as_ref()),
            |_| true,
        );
        let page = match page {
            Ok(p) => p,
            Err(skip) => {
                tracing::debug!(url = %hit.url, reason = ?skip.reason, "page skipped");
                return (outcome(PageStatus::Skipped { reason: skip.reason }), None);
            }
        };
        let request = SummaryRequest {
            original_question: question.to_string(),
            content: page.text,
        };
        let summary = self.cached(
            Stage::Summarize,
            &hit.url,
            question,
            || summarize(&request, self.summarizer.as_ref(), &self.config.summarize),
            |s| !matches!(s, SummaryOutcome::Degraded(_)),
        );
        match summary {
            Ok(SummaryOutcome::Relevant(text)) => (outcome(PageStatus::Relevant), Some(text)),
            Ok(SummaryOutcome::Degraded(text)) => (outcome(PageStatus::Degraded), Some(text)),
            Ok(SummaryOutcome::Unrelated) => (outcome(PageStatus::Unrelated), None),
            Err(_) => (
                outcome(PageStatus::Skipped {
                    reason: SkipReason::EmptyContent,
                }),
                None,
            ),
        }
    }

    /// search → extract each hit → summarize each page → join the relevant
    /// summaries, each under its attribution line, in rank order.
    pub fn build_observation(
        &self,
        query: &str,
        original_question: &str,
    ) -> Result<ObservationReport, SearchError> {
        let hits = self.cached(
            Stage::Search,
            query,
            "",
            || web_search(self.provider.as_ref(), query, self.config.top_k),
            |_| true,
        );
        let hits = match hits {
            Ok(h) => h,
            Err(SearchError::EmptyResults) => {
                return Ok(ObservationReport {
                    observation: Observation::environment(NO_RESULTS, Vec::new()),
                    pages: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        };
        let hits = &hits[..hits.len().min(self.config.top_k)];
        let pages = crate::agent::par_map(hits.len(), self.config.page_jobs, |i| {
            self.page(&hits[i], original_question)
        });

        let mut blocks = Vec::new();
        let mut sources = Vec::new();
        for (outcome, text) in &pages {
            if let Some(text) = text {
                blocks.push(format!("{}\n{}", attribution(&outcome.title), text));
                sources.push(SourceRecord {
                    url: outcome.url.clone(),
                    title: outcome.title.clone(),
                });
            }
        }
        let text = if blocks.is_empty() {
            NO_RELEVANT_INFORMATION.to_string()
        } else {
            blocks.join("\n\n")
        };
        Ok(ObservationReport {
            observation: Observation::environment(text, sources),
            pages: pages.into_iter().map(|(o, _)| o).collect(),
        })
    }
}

impl EnvironmentPort for ObservationPipeline {
    fn observe(&self, query: &str, original_question: &str) -> Result<Observation, EnvError> {
        match self.build_observation(query, original_question) {
            Ok(report) => Ok(report.observation),
            Err(SearchError::EmptyQuery) => Ok(Observation::environment(NO_RESULTS, Vec::new())),
            Err(e) if self.config.degrade_on_provider_error => {
                tracing::warn!(error = %e, query, "search failed, injecting degraded observation");
                Ok(Observation::environment(SEARCH_UNAVAILABLE, Vec::new()))
            }
            Err(e) => Err(EnvError::Failed(e.to_string())),
        }
    }
}
