//! Blocking HTTP implementations of the core ports.
//!
//! * [`ChatEndpoint`]: OpenAI-style `/chat/completions` servers (vLLM,
//!   SGLang and hosted APIs all speak it).
//! * [`SerpProvider`]: SerpAPI-compatible JSON search.
//! * [`ReaderFetcher`]: reader proxies that take the target URL as a path
//!   suffix and return plain text, e.g. `https://r.jina.ai/<url>`.

use std::time::Duration;

use lras_core::endpoint::{ChatMessage, DecodingParams, EndpointError, PolicyEndpoint};
use lras_core::search::{FetchError, PageFetcher, RawPage, SearchError, SearchProvider, SearchResult};
use reqwest::blocking::{Client, Response};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const SERPAPI_URL: &str = "https://serpapi.com/search";
pub const JINA_READER_URL: &str = "https://r.jina.ai/";

fn client(timeout: Duration) -> Result<Client, String> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| e.to_string())
}

/// Reads `name` from the environment; empty values count as missing.
pub fn credential(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSpec {
    /// Base URL up to and including the API version, e.g.
    /// `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token; `None` sends no
    /// authorization header.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

pub struct ChatEndpoint {
    url: String,
    model: String,
    api_key: Option<String>,
    client: Client,
}

impl std::fmt::Debug for ChatEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatEndpoint")
            .field("url", &self.url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chat_template_kwargs: Option<TemplateKwargs>,
}

#[derive(Serialize)]
struct TemplateKwargs {
    enable_thinking: bool,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatEndpoint {
    /// Resolves the credential now so a missing key fails at startup.
    pub fn from_spec(spec: &EndpointSpec, timeout: Duration) -> Result<Self, EndpointError> {
        let api_key = match &spec.api_key_env {
            Some(var) => Some(credential(var).ok_or_else(|| {
                EndpointError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        Self::new(&spec.base_url, &spec.model, api_key, timeout)
    }

    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, EndpointError> {
        url::Url::parse(base_url).map_err(|e| EndpointError::Config(format!("base url {base_url}: {e}")))?;
        if model.trim().is_empty() {
            return Err(EndpointError::Config("model name is empty".into()));
        }
        Ok(Self {
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            client: client(timeout).map_err(EndpointError::Config)?,
        })
    }
}

fn transport(e: reqwest::Error) -> EndpointError {
    if e.is_timeout() {
        EndpointError::Timeout
    } else {
        EndpointError::Transport(e.to_string())
    }
}

fn check_status(resp: Response) -> Result<Response, EndpointError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let body = resp.text().unwrap_or_default();
    Err(EndpointError::Status {
        code: status.as_u16(),
        body: body.chars().take(500).collect(),
    })
}

impl PolicyEndpoint for ChatEndpoint {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        let body = ChatRequest {
            model: &self.model,
            messages,
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            top_k: (decoding.top_k > 0).then_some(decoding.top_k),
            max_tokens: decoding.max_new_tokens,
            min_p: decoding.min_p,
            seed: decoding.seed,
            chat_template_kwargs: decoding
                .enable_thinking
                .map(|enable_thinking| TemplateKwargs { enable_thinking }),
        };
        tracing::debug!(model = %self.model, messages = messages.len(), "chat completion");
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = check_status(req.send().map_err(transport)?)?;
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| EndpointError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| EndpointError::InvalidResponse("response has no message content".into()))
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// SerpAPI-style search: `GET base?q=…&api_key=…&num=…&engine=…`, hits in
/// `organic_results`.
pub struct SerpProvider {
    base_url: String,
    api_key: String,
    engine: String,
    client: Client,
}

#[derive(Deserialize)]
struct SerpResponse {
    #[serde(default)]
    organic_results: Vec<SerpHit>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Deserialize)]
struct SerpHit {
    #[serde(default)]
    position: Option<u32>,
    #[serde(default)]
    title: String,
    link: String,
    #[serde(default)]
    snippet: String,
}

impl SerpProvider {
    pub fn new(base_url: &str, api_key: String, timeout: Duration) -> Result<Self, SearchError> {
        url::Url::parse(base_url).map_err(|e| SearchError::Provider(format!("base url {base_url}: {e}")))?;
        Ok(Self {
            base_url: base_url.to_string(),
            api_key,
            engine: "google".into(),
            client: client(timeout).map_err(SearchError::Provider)?,
        })
    }

    pub fn with_engine(mut self, engine: &str) -> Self {
        self.engine = engine.to_string();
        self
    }
}

fn is_quota_message(msg: &str) -> bool {
    let m = msg.to_ascii_lowercase();
    m.contains("run out of searches") || m.contains("quota") || m.contains("limit")
}

impl SearchProvider for SerpProvider {
    fn search(&self, query: &str, top_k: usize) -> Result<Vec<SearchResult>, SearchError> {
        let num = top_k.to_string();
        let resp = self
            .client
            .get(&self.base_url)
            .query(&[
                ("q", query),
                ("api_key", self.api_key.as_str()),
                ("engine", self.engine.as_str()),
                ("num", num.as_str()),
            ])
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    SearchError::Timeout
                } else {
                    SearchError::Provider(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| SearchError::Provider(e.to_string()))?;
        let parsed: Option<SerpResponse> = serde_json::from_str(&text).ok();
        let message = parsed.as_ref().and_then(|p| p.error.clone());
        if status.as_u16() == 429 {
            return Err(SearchError::Quota(message.unwrap_or_else(|| "rate limited".into())));
        }
        if let Some(msg) = message {
            // "Google hasn't returned any results" is an empty page, not a failure.
            if msg.to_ascii_lowercase().contains("hasn't returned any results") {
                return Ok(Vec::new());
            }
            return Err(if is_quota_message(&msg) {
                SearchError::Quota(msg)
            } else {
                SearchError::Provider(msg)
            });
        }
        if !status.is_success() {
            return Err(SearchError::Provider(format!("status {status}")));
        }
        let parsed = parsed.ok_or_else(|| SearchError::Provider("unparseable search response".into()))?;
        Ok(parsed
            .organic_results
            .into_iter()
            .enumerate()
            .map(|(i, h)| SearchResult {
                rank: h.position.unwrap_or(i as u32 + 1),
                url: h.link,
                title: h.title,
                snippet: h.snippet,
            })
            .collect())
    }
}

/// Reader proxy: `GET {base}{target_url}` returns the page as plain text.
pub struct ReaderFetcher {
    base_url: String,
    api_key: Option<String>,
    client: Client,
}

impl ReaderFetcher {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, FetchError> {
        url::Url::parse(base_url).map_err(|e| FetchError::Service(format!("base url {base_url}: {e}")))?;
        let base_url = if base_url.ends_with('/') {
            base_url.to_string()
        } else {
            format!("{base_url}/")
        };
        Ok(Self {
            base_url,
            api_key,
            client: client(timeout).map_err(FetchError::Service)?,
        })
    }
}

impl PageFetcher for ReaderFetcher {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        let mut req = self
            .client
            .get(format!("{}{}", self.base_url, url))
            .header("Accept", "text/plain");
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                FetchError::Timeout
            } else {
                FetchError::Service(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(FetchError::Service(format!("reader returned {status}")));
        }
        if !status.is_success() {
            return Err(FetchError::Failed(format!("reader returned {status}")));
        }
        let content_type = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("text/plain")
            .to_string();
        let body = resp.bytes().map_err(|e| FetchError::Service(e.to_string()))?;
        Ok(RawPage {
            url: url.to_string(),
            content_type,
            body: body.to_vec(),
        })
    }
}
