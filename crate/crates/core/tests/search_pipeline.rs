use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use lras_core::agent::EnvironmentPort;
use lras_core::clock::ManualClock;
use lras_core::endpoint::{ChatMessage, DecodingParams, EndpointError, PolicyEndpoint};
use lras_core::search::html::html_to_text;
use lras_core::search::{
    CannedCorpus, ObservationPipeline, PageStatus, PipelineConfig, SearchError, SearchProvider, SearchResult,
    SkipReason, StageCache, NO_RELEVANT_INFORMATION, NO_RESULTS, SEARCH_UNAVAILABLE,
};
use lras_core::stubs::ExtractiveSummarizer;

const QUESTION: &str = "Can a lessee sublease the leased property without the lessor consent?";

fn hit(url: &str, title: &str, rank: u32) -> SearchResult {
    SearchResult {
        url: url.into(),
        title: title.into(),
        snippet: String::new(),
        rank,
    }
}

fn page(title: &str, paragraphs: &[&str]) -> String {
    let body: String = paragraphs.iter().map(|p| format!("<p>{p}</p>")).collect();
    format!("<html><head><title>{title}</title></head><body><nav>Menu</nav><article>{body}</article></body></html>")
}

/// Five hits: two relevant pages, one off-topic page, one PDF, one URL with
/// no page behind it.
fn five_hit_corpus() -> CannedCorpus {
    let mut c = CannedCorpus::new();
    c.add_query(
        "sublease consent",
        vec![
            hit("https://a.example/lease", "Lease chapter", 1),
            hit("https://b.example/weather", "Weather", 2),
            hit("https://c.example/scan.pdf", "Scanned judgment", 3),
            hit("https://d.example/commentary", "Sublease commentary", 4),
            hit("https://e.example/missing", "Gone", 5),
        ],
    )
    .add_page(
        "https://a.example/lease",
        "text/html",
        &page(
            "Lease chapter",
            &["A lessee may sublease the leased property with the lessor consent.", "Without consent the lessor may terminate."],
        ),
    )
    .add_page("https://b.example/weather", "text/html", &page("Weather", &["Sunny skies all week.", "Rain expected later."]))
    .add_page("https://c.example/scan.pdf", "application/pdf", "%PDF-1.4 binary")
    .add_page(
        "https://d.example/commentary",
        "text/html",
        &page("Sublease commentary", &["Courts read lessor consent broadly when a lessee may sublease."]),
    );
    c
}

fn pipeline(c: Arc<CannedCorpus>, summarizer: Arc<dyn PolicyEndpoint>) -> ObservationPipeline {
    ObservationPipeline::new(c.clone(), c, summarizer, PipelineConfig::default())
}

#[test]
fn golden_html_corpus() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/html");
    let mut names: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "html"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for html_path in names {
        let html = std::fs::read_to_string(&html_path).unwrap();
        let expected = std::fs::read_to_string(html_path.with_extension("txt")).unwrap();
        assert_eq!(html_to_text(&html), expected.trim_end(), "{}", html_path.display());
    }
}

#[test]
fn two_of_five_pages_make_the_observation() {
    let c = Arc::new(five_hit_corpus());
    let summarizer = Arc::new(ExtractiveSummarizer::default());
    let report = pipeline(c.clone(), summarizer.clone())
        .build_observation("sublease consent", QUESTION)
        .unwrap();
    let statuses: Vec<_> = report.pages.iter().map(|p| p.status.clone()).collect();
    assert_eq!(
        statuses,
        vec![
            PageStatus::Relevant,
            PageStatus::Unrelated,
            PageStatus::Skipped { reason: SkipReason::NonText },
            PageStatus::Relevant,
            PageStatus::Skipped { reason: SkipReason::FetchTimeout },
        ]
    );
    let text = &report.observation.information_text;
    let blocks: Vec<&str> = text.split("\n\n").collect();
    assert_eq!(blocks.len(), 2);
    assert!(blocks[0].starts_with("【source: Lease chapter】\n"));
    assert!(blocks[1].starts_with("【source: Sublease commentary】\n"));
    assert!(!text.contains("Sunny"));
    assert!(!text.contains("Menu"));
    let urls: Vec<_> = report.observation.sources.iter().map(|s| s.url.as_str()).collect();
    assert_eq!(urls, ["https://a.example/lease", "https://d.example/commentary"]);
    // Only pages that were extracted reach the summarizer.
    assert_eq!(summarizer.calls(), 3);
}

#[test]
fn cache_serves_repeat_queries_without_calls() {
    let c = Arc::new(five_hit_corpus());
    let summarizer = Arc::new(ExtractiveSummarizer::default());
    let cache = Arc::new(StageCache::new(Duration::from_secs(7 * 24 * 3600)));
    let env = pipeline(c.clone(), summarizer.clone()).with_cache(cache);
    let first = env.observe("sublease consent", QUESTION).unwrap();
    let (s, f, m) = (c.search_calls(), c.fetch_calls(), summarizer.calls());
    let second = env.observe("  Sublease   CONSENT ", QUESTION).unwrap();
    assert_eq!(first, second);
    assert_eq!((c.search_calls(), summarizer.calls()), (s, m));
    // Skipped pages are not cached and get another try; the two that were
    // extracted come from the cache.
    assert_eq!(c.fetch_calls(), f + 2);
}

#[test]
fn cache_entries_expire() {
    let c = Arc::new(five_hit_corpus());
    let clock = Arc::new(ManualClock::new(0));
    let cache = Arc::new(StageCache::with_clock(Duration::from_secs(60), clock.clone()));
    let env = pipeline(c.clone(), Arc::new(ExtractiveSummarizer::default()))
        .with_cache(cache)
        .with_clock(clock.clone());
    env.observe("sublease consent", QUESTION).unwrap();
    env.observe("sublease consent", QUESTION).unwrap();
    assert_eq!(c.search_calls(), 1);
    clock.advance(Duration::from_secs(61));
    env.observe("sublease consent", QUESTION).unwrap();
    assert_eq!(c.search_calls(), 2);
}

#[test]
fn top_k_limits_fetches() {
    let mut c = CannedCorpus::new();
    let hits: Vec<_> = (1..=8).map(|i| hit(&format!("https://x.example/{i}"), "Lease", i)).collect();
    c.add_query("lease", hits);
    for i in 1..=8 {
        c.add_page(&format!("https://x.example/{i}"), "text/html", &page("Lease", &["A lessee may sublease with lessor consent."]));
    }
    let c = Arc::new(c);
    let report = pipeline(c.clone(), Arc::new(ExtractiveSummarizer::default()))
        .build_observation("lease", QUESTION)
        .unwrap();
    assert_eq!(report.pages.len(), 5);
    assert_eq!(c.fetch_calls(), 5);
    assert_eq!(report.observation.sources.len(), 5);
}

#[test]
fn fallback_observations() {
    let c = Arc::new(five_hit_corpus());
    let env = pipeline(c, Arc::new(ExtractiveSummarizer::default()));
    let none = env.observe("no such query", QUESTION).unwrap();
    assert_eq!(none.information_text, NO_RESULTS);
    let unrelated = env.observe("sublease consent", "What is the weather forecast for tomorrow?").unwrap();
    assert_eq!(unrelated.information_text, NO_RELEVANT_INFORMATION);
    assert!(unrelated.sources.is_empty());
}

struct DownProvider;

impl SearchProvider for DownProvider {
    fn search(&self, _: &str, _: usize) -> Result<Vec<SearchResult>, SearchError> {
        Err(SearchError::Quota("monthly limit".into()))
    }
}

#[test]
fn provider_failure_degrades_or_fails() {
    let c = Arc::new(CannedCorpus::new());
    let env = ObservationPipeline::new(
        Arc::new(DownProvider),
        c.clone(),
        Arc::new(ExtractiveSummarizer::default()),
        PipelineConfig::default(),
    );
    assert_eq!(env.observe("q", QUESTION).unwrap().information_text, SEARCH_UNAVAILABLE);
    let strict = ObservationPipeline::new(
        Arc::new(DownProvider),
        c,
        Arc::new(ExtractiveSummarizer::default()),
        PipelineConfig {
            degrade_on_provider_error: false,
            ..PipelineConfig::default()
        },
    );
    assert!(strict.observe("q", QUESTION).is_err());
}

struct BrokenSummarizer;

impl PolicyEndpoint for BrokenSummarizer {
    fn generate(&self, _: &[ChatMessage], _: &DecodingParams) -> Result<String, EndpointError> {
        Err(EndpointError::Status {
            code: 400,
            body: "bad request".into(),
        })
    }
    fn model_id(&self) -> &str {
        "broken"
    }
}

#[test]
fn summarizer_failure_keeps_a_short_excerpt() {
    let long = "A lessee may sublease with consent. ".repeat(100);
    let mut c = CannedCorpus::new();
    c.add_query("lease", vec![hit("https://x.example/long", "Long page", 1)])
        .add_page("https://x.example/long", "text/plain", &long);
    let report = pipeline(Arc::new(c), Arc::new(BrokenSummarizer))
        .build_observation("lease", QUESTION)
        .unwrap();
    assert_eq!(report.pages[0].status, PageStatus::Degraded);
    let text = &report.observation.information_text;
    let body = text.strip_prefix("【source: Long page】\n").unwrap();
    assert!(body.chars().count() <= 1_500, "{}", body.chars().count());
    assert!(long.starts_with(body.trim_end()));
}

#[test]
fn invalid_urls_are_skipped() {
    let mut c = CannedCorpus::new();
    c.add_query("lease", vec![hit("ftp://x.example/a", "Ftp", 1), hit("not a url", "Junk", 2)]);
    let report = pipeline(Arc::new(c), Arc::new(ExtractiveSummarizer::default()))
        .build_observation("lease", QUESTION)
        .unwrap();
    assert!(report
        .pages
        .iter()
        .all(|p| p.status == PageStatus::Skipped { reason: SkipReason::InvalidUrl }));
    assert_eq!(report.observation.information_text, NO_RELEVANT_INFORMATION);
}
