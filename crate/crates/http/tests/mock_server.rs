use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use lras_core::endpoint::{ChatMessage, DecodingParams, EndpointError, PolicyEndpoint};
use lras_core::search::{FetchError, PageFetcher, SearchError, SearchProvider};
use lras_http::{ChatEndpoint, EndpointSpec, ReaderFetcher, SerpProvider};

struct Captured {
    request_line: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Captured {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves exactly one request with a canned response and hands back what it
/// received. `delay` holds the response back to provoke client timeouts.
fn serve_once(status: u16, content_type: &str, body: &str, delay: Duration) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    let content_type = content_type.to_string();
    let body = body.to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut headers = Vec::new();
        let mut len = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            let (k, v) = line.split_once(':').unwrap();
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut buf = vec![0u8; len];
        reader.read_exact(&mut buf).unwrap();
        let _ = tx.send(Captured {
            request_line: request_line.trim_end().to_string(),
            headers,
            body: String::from_utf8(buf).unwrap(),
        });
        thread::sleep(delay);
        let mut stream = stream;
        let _ = write!(
            stream,
            "HTTP/1.1 {status} X\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
    });
    (addr, rx)
}

fn messages() -> Vec<ChatMessage> {
    vec![ChatMessage::system("sys"), ChatMessage::user("hello")]
}

#[test]
fn chat_request_shape_and_reply() {
    let reply = r#"{"choices":[{"message":{"role":"assistant","content":"<think>x</think><answer>A</answer>"}}]}"#;
    let (addr, rx) = serve_once(200, "application/json", reply, Duration::ZERO);
    let ep = ChatEndpoint::new(&format!("{addr}/v1/"), "policy-7b", Some("sk-test".into()), Duration::from_secs(5)).unwrap();
    let out = ep.generate(&messages(), &DecodingParams::summarizer().with_seed(9)).unwrap();
    assert_eq!(out, "<think>x</think><answer>A</answer>");
    assert_eq!(ep.model_id(), "policy-7b");

    let got = rx.recv().unwrap();
    assert_eq!(got.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(got.header("authorization"), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&got.body).unwrap();
    assert_eq!(body["model"], "policy-7b");
    assert_eq!(body["messages"][1]["content"], "hello");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["top_p"], 0.8);
    assert_eq!(body["top_k"], 20);
    assert_eq!(body["max_tokens"], 8192);
    assert_eq!(body["min_p"], 0.0);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["chat_template_kwargs"]["enable_thinking"], false);
}

#[test]
fn greedy_profile_omits_optional_fields() {
    let reply = r#"{"choices":[{"message":{"content":"ok"}}]}"#;
    let (addr, rx) = serve_once(200, "application/json", reply, Duration::ZERO);
    let ep = ChatEndpoint::new(&addr, "m", None, Duration::from_secs(5)).unwrap();
    ep.generate(&messages(), &DecodingParams::evaluation()).unwrap();
    let got = rx.recv().unwrap();
    assert!(got.header("authorization").is_none());
    let body: serde_json::Value = serde_json::from_str(&got.body).unwrap();
    for key in ["top_k", "seed", "min_p", "chat_template_kwargs"] {
        assert!(body.get(key).is_none(), "{key}");
    }
}

#[test]
fn chat_error_mapping() {
    let (addr, _rx) = serve_once(503, "text/plain", "overloaded", Duration::ZERO);
    let ep = ChatEndpoint::new(&addr, "m", None, Duration::from_secs(5)).unwrap();
    let err = ep.generate(&messages(), &DecodingParams::evaluation()).unwrap_err();
    assert_eq!(err, EndpointError::Status { code: 503, body: "overloaded".into() });
    assert!(err.is_retryable());

    let (addr, _rx) = serve_once(200, "application/json", "{not json", Duration::ZERO);
    let ep = ChatEndpoint::new(&addr, "m", None, Duration::from_secs(5)).unwrap();
    assert!(matches!(ep.generate(&messages(), &DecodingParams::evaluation()), Err(EndpointError::InvalidResponse(_))));

    let (addr, _rx) = serve_once(200, "application/json", r#"{"choices":[]}"#, Duration::ZERO);
    let ep = ChatEndpoint::new(&addr, "m", None, Duration::from_secs(5)).unwrap();
    assert!(matches!(ep.generate(&messages(), &DecodingParams::evaluation()), Err(EndpointError::InvalidResponse(_))));

    let (addr, _rx) = serve_once(200, "application/json", "{}", Duration::from_millis(1500));
    let ep = ChatEndpoint::new(&addr, "m", None, Duration::from_millis(300)).unwrap();
    assert_eq!(ep.generate(&messages(), &DecodingParams::evaluation()).unwrap_err(), EndpointError::Timeout);

    // Nothing listens on a just-released port.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = ChatEndpoint::new(&format!("http://127.0.0.1:{port}"), "m", None, Duration::from_secs(2)).unwrap();
    assert!(matches!(ep.generate(&messages(), &DecodingParams::evaluation()), Err(EndpointError::Transport(_))));
}

#[test]
fn missing_credential_is_a_config_error() {
    let spec = EndpointSpec {
        base_url: "http://127.0.0.1:1/v1".into(),
        model: "m".into(),
        api_key_env: Some("LRAS_HTTP_TEST_SURELY_UNSET".into()),
    };
    assert!(matches!(ChatEndpoint::from_spec(&spec, Duration::from_secs(1)), Err(EndpointError::Config(_))));
    assert!(matches!(ChatEndpoint::new("not a url", "m", None, Duration::from_secs(1)), Err(EndpointError::Config(_))));
}

#[test]
fn serp_results_and_query() {
    let reply = r#"{"organic_results":[
        {"position":1,"title":"Civil Code","link":"https://law.example/cc","snippet":"Art. 716"},
        {"title":"Notes","link":"https://law.example/notes"}]}"#;
    let (addr, rx) = serve_once(200, "application/json", reply, Duration::ZERO);
    let p = SerpProvider::new(&format!("{addr}/search"), "key1".into(), Duration::from_secs(5)).unwrap();
    let hits = p.search("sublease consent", 5).unwrap();
    assert_eq!(hits.len(), 2);
    assert_eq!((hits[0].rank, hits[0].url.as_str(), hits[0].snippet.as_str()), (1, "https://law.example/cc", "Art. 716"));
    assert_eq!((hits[1].rank, hits[1].title.as_str()), (2, "Notes"));
    let got = rx.recv().unwrap();
    assert!(got.request_line.starts_with("GET /search?"), "{}", got.request_line);
    for part in ["q=sublease+consent", "api_key=key1", "num=5", "engine=google"] {
        assert!(got.request_line.contains(part), "{part} in {}", got.request_line);
    }
}

#[test]
fn serp_error_mapping() {
    let (addr, _rx) = serve_once(429, "application/json", r#"{"error":"Too many requests"}"#, Duration::ZERO);
    let p = SerpProvider::new(&addr, "k".into(), Duration::from_secs(5)).unwrap();
    assert!(matches!(p.search("x", 5), Err(SearchError::Quota(_))));

    let body = r#"{"error":"Your account has run out of searches."}"#;
    let (addr, _rx) = serve_once(200, "application/json", body, Duration::ZERO);
    let p = SerpProvider::new(&addr, "k".into(), Duration::from_secs(5)).unwrap();
    assert!(matches!(p.search("x", 5), Err(SearchError::Quota(_))));

    let (addr, _rx) = serve_once(401, "application/json", r#"{"error":"Invalid API key."}"#, Duration::ZERO);
    let p = SerpProvider::new(&addr, "k".into(), Duration::from_secs(5)).unwrap();
    assert_eq!(p.search("x", 5), Err(SearchError::Provider("Invalid API key.".into())));

    let body = r#"{"error":"Google hasn't returned any results for this query."}"#;
    let (addr, _rx) = serve_once(200, "application/json", body, Duration::ZERO);
    let p = SerpProvider::new(&addr, "k".into(), Duration::from_secs(5)).unwrap();
    assert_eq!(p.search("x", 5), Ok(Vec::new()));

    let (addr, _rx) = serve_once(200, "application/json", "{}", Duration::from_millis(1500));
    let p = SerpProvider::new(&addr, "k".into(), Duration::from_millis(300)).unwrap();
    assert_eq!(p.search("x", 5), Err(SearchError::Timeout));
}

#[test]
fn reader_fetch_and_errors() {
    let (addr, rx) = serve_once(200, "text/plain; charset=utf-8", "Title: Lease\n\nA lessee may sublease.", Duration::ZERO);
    let f = ReaderFetcher::new(&addr, Some("jina".into()), Duration::from_secs(5)).unwrap();
    let page = f.fetch("https://law.example/cc").unwrap();
    assert_eq!(page.url, "https://law.example/cc");
    assert!(page.content_type.starts_with("text/plain"));
    assert_eq!(page.body, b"Title: Lease\n\nA lessee may sublease.");
    let got = rx.recv().unwrap();
    assert_eq!(got.request_line, "GET /https://law.example/cc HTTP/1.1");
    assert_eq!(got.header("authorization"), Some("Bearer jina"));

    let (addr, _rx) = serve_once(502, "text/plain", "bad gateway", Duration::ZERO);
    let f = ReaderFetcher::new(&addr, None, Duration::from_secs(5)).unwrap();
    assert!(matches!(f.fetch("https://x.example/"), Err(FetchError::Service(_))));

    let (addr, _rx) = serve_once(404, "text/plain", "nope", Duration::ZERO);
    let f = ReaderFetcher::new(&addr, None, Duration::from_secs(5)).unwrap();
    assert!(matches!(f.fetch("https://x.example/"), Err(FetchError::Failed(_))));

    let (addr, _rx) = serve_once(200, "text/plain", "late", Duration::from_millis(1500));
    let f = ReaderFetcher::new(&addr, None, Duration::from_millis(300)).unwrap();
    assert_eq!(f.fetch("https://x.example/").unwrap_err(), FetchError::Timeout);
}
