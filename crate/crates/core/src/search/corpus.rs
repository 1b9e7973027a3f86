//! Canned search corpus for hermetic runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{normalize_query, FetchError, PageFetcher, RawPage, SearchError, SearchProvider, SearchResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedQuery {
    pub query: String,
    pub results: Vec<SearchResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CannedPage {
    #[serde(default = "html_type")]
    pub content_type: String,
    pub body: String,
}

fn html_type() -> String {
    "text/html; charset=utf-8".into()
}

#[derive(Debug, Default)]
pub struct CorpusCounters {
    pub searches: AtomicUsize,
    pub fetches: AtomicUsize,
}

/// Queries map to fixed hit lists (matched after normalization); URLs map
/// to fixed pages. A URL with no page behaves like an unreachable host.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CannedCorpus {
    #[serde(default)]
    pub queries: Vec<CannedQuery>,
    #[serde(default)]
    pub pages: BTreeMap<String, CannedPage>,
    #[serde(skip)]
    counters: CorpusCounters,
}

impl Clone for CannedCorpus {
    fn clone(&self) -> Self {
        Self {
            queries: self.queries.clone(),
            pages: self.pages.clone(),
            counters: CorpusCounters::default(),
        }
    }
}

impl CannedCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_query(&mut self, query: &str, results: Vec<SearchResult>) -> &mut Self {
        self.queries.push(CannedQuery {
            query: query.to_string(),
            results,
        });
        self
    }

    pub fn add_page(&mut self, url: &str, content_type: &str, body: &str) -> &mut Self {
        self.pages.insert(
            url.to_string(),
            CannedPage {
                content_type: content_type.to_string(),
                body: body.to_string(),
            },
        );
        self
    }

    pub fn search_calls(&self) -> usize {
        self.counters.searches.load(Ordering::SeqCst)
    }

    pub fn fetch_calls(&self) -> usize {
        self.counters.fetches.load(Ordering::SeqCst)
    }
}

impl SearchProvider for CannedCorpus {
    fn search(&self, query: &str, _top_k: usize) -> Result<Vec<SearchResult>, SearchError> {
        self.counters.searches.fetch_add(1, Ordering::SeqCst);
        let wanted = normalize_query(query);
        Ok(self
            .queries
            .iter()
            .find(|q| normalize_query(&q.query) == wanted)
            .map(|q| q.results.clone())
            .unwrap_or_default())
    }
}

impl PageFetcher for CannedCorpus {
    fn fetch(&self, url: &str) -> Result<RawPage, FetchError> {
        self.counters.fetches.fetch_add(1, Ordering::SeqCst);
        let page = self.pages.get(url).ok_or(FetchError::Timeout)?;
        Ok(RawPage {
            url: url.to_string(),
            content_type: page.content_type.clone(),
            body: page.body.clone().into_bytes(),
        })
    }
}
