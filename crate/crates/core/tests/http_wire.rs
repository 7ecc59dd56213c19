mod common;

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use synthrr::llm::{complete_with_policy, HttpLlm, ResponseCache, RetryPolicy};
use synthrr::metrics::{label_preservation, Classifier, HttpClassifier};
use synthrr::pipeline::config::Overrides;
use synthrr::pipeline::{artifacts, Pipeline};
use synthrr::{Error, GenerationParams, LlmClient, LlmError, Stage, SyntheticExample};

#[derive(Debug, Clone)]
struct Request {
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

type Responder = Box<dyn Fn(&Request) -> (u16, Vec<(String, String)>, String) + Send + Sync>;

/// A one-request-per-connection HTTP server answering from a script, then
/// from a fallback responder once the script runs out.
struct MockServer {
    url: String,
    log: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    fn start(script: Vec<(u16, &str, &str)>, fallback: Responder) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let script: Arc<Mutex<VecDeque<(u16, String, String)>>> = Arc::new(Mutex::new(
            script
                .into_iter()
                .map(|(s, h, b)| (s, h.to_owned(), b.to_owned()))
                .collect(),
        ));
        let fallback = Arc::new(fallback);
        let server_log = log.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (log, script, fallback) = (server_log.clone(), script.clone(), fallback.clone());
                std::thread::spawn(move || serve(stream, &log, &script, &**fallback));
            }
        });
        Self { url, log }
    }

    fn requests(&self) -> Vec<Request> {
        self.log.lock().unwrap().clone()
    }
}

fn serve(
    mut stream: TcpStream,
    log: &Mutex<Vec<Request>>,
    script: &Mutex<VecDeque<(u16, String, String)>>,
    fallback: &(dyn Fn(&Request) -> (u16, Vec<(String, String)>, String) + Send + Sync),
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("").to_owned();
    let mut headers = Vec::new();
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':').unwrap();
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_owned());
        if k == "content-length" {
            len = v.parse().unwrap();
        }
        headers.push((k, v));
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let req = Request {
        path,
        headers,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    log.lock().unwrap().push(req.clone());
    let (status, extra, body) = match script.lock().unwrap().pop_front() {
        Some((s, h, b)) => {
            let extra = h
                .split_once(':')
                .map(|(k, v)| vec![(k.to_owned(), v.trim().to_owned())])
                .unwrap_or_default();
            (s, extra, b)
        }
        None => fallback(&req),
    };
    let mut resp = format!(
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n",
        body.len()
    );
    for (k, v) in extra {
        resp.push_str(&format!("{k}: {v}\r\n"));
    }
    resp.push_str("\r\n");
    resp.push_str(&body);
    let _ = stream.write_all(resp.as_bytes());
}

fn chat(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
        jitter: false,
    }
}

fn no_fallback() -> Responder {
    Box::new(|_| (500, vec![], "unscripted".into()))
}

#[test]
fn chat_request_shape_and_rate_limit_retry() {
    let server = MockServer::start(
        vec![
            (429, "retry-after: 0", "{\"error\": \"slow down\"}"),
            (200, "", &chat("  A generated headline\n\n\nignored tail")),
        ],
        no_fallback(),
    );
    let llm = HttpLlm::new(format!("{}/v1/", server.url), "teacher-model", Some("sekret".into()));
    let params = GenerationParams::default().with_seed(42);
    let got = complete_with_policy(&llm, None, "Write a headline.", &params, &fast_retry(3)).unwrap();
    assert_eq!(got.text, "A generated headline");
    assert_eq!(got.attempts, 2);
    assert!(!got.cached);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 2);
    let r = &reqs[1];
    assert_eq!(r.path, "/v1/chat/completions");
    assert!(r.headers.contains(&("authorization".into(), "Bearer sekret".into())));
    assert_eq!(r.body["model"], "teacher-model");
    assert_eq!(r.body["messages"], json!([{"role": "user", "content": "Write a headline."}]));
    assert_eq!(r.body["temperature"], json!(params.temperature));
    assert_eq!(r.body["top_p"], json!(params.top_p));
    assert_eq!(r.body["max_tokens"], json!(params.max_new_tokens));
    assert_eq!(r.body["seed"], json!(42));
    assert_eq!(r.body["stop"], json!(params.stop_sequences));
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![(400, "", "{\"error\": \"bad prompt\"}")], no_fallback());
    let llm = HttpLlm::new(&server.url, "m", None);
    let err = complete_with_policy(&llm, None, "p", &GenerationParams::default(), &fast_retry(5)).unwrap_err();
    assert!(matches!(err, LlmError::Rejected { status: 400, .. }), "{err:?}");
    assert_eq!(err.attempts(), 1);
    assert_eq!(server.requests().len(), 1);
    assert!(server.requests()[0].headers.iter().all(|(k, _)| k != "authorization"));
}

#[test]
fn persistent_server_errors_exhaust_the_budget() {
    let server = MockServer::start(vec![], no_fallback());
    let llm = HttpLlm::new(&server.url, "m", None);
    let err = complete_with_policy(&llm, None, "p", &GenerationParams::default(), &fast_retry(3)).unwrap_err();
    assert!(matches!(err, LlmError::Exhausted { .. }), "{err:?}");
    assert_eq!(err.kind(), "transient");
    assert_eq!(err.attempts(), 3);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn malformed_completion_is_reported() {
    let server = MockServer::start(vec![(200, "", "{\"choices\": []}")], no_fallback());
    let llm = HttpLlm::new(&server.url, "m", None);
    let err = llm.complete("p", &GenerationParams::default()).unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn response_cache_survives_reopen() {
    let server = MockServer::start(vec![(200, "", &chat("cached text"))], no_fallback());
    let llm = HttpLlm::new(&server.url, "m", None);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let params = GenerationParams::default().with_seed(1);
    {
        let cache = ResponseCache::open(&path).unwrap();
        let c = complete_with_policy(&llm, Some(&cache), "p", &params, &fast_retry(2)).unwrap();
        assert_eq!((c.text.as_str(), c.cached), ("cached text", false));
    }
    let cache = ResponseCache::open(&path).unwrap();
    assert_eq!(cache.len(), 1);
    let c = complete_with_policy(&llm, Some(&cache), "p", &params, &fast_retry(2)).unwrap();
    assert_eq!((c.text.as_str(), c.cached, c.attempts), ("cached text", true, 0));
    // A different seed is a different request.
    let err = complete_with_policy(&llm, Some(&cache), "p", &params.with_seed(2), &fast_retry(1));
    assert!(err.is_err());
    assert_eq!(server.requests().len(), 2);
    let line = fs::read_to_string(&path).unwrap();
    assert_eq!(line.lines().count(), 1);
}

fn classify_by_keyword() -> Responder {
    Box::new(|req| {
        let labels: Vec<&str> = req.body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| if t.as_str().unwrap().contains("good") { "positive" } else { "negative" })
            .collect();
        (200, vec![], json!({ "labels": labels }).to_string())
    })
}

fn example(text: &str, label: &str, i: u64) -> SyntheticExample {
    SyntheticExample {
        text: text.into(),
        label: label.into(),
        seed_id: "s".into(),
        doc_id: None,
        prompt_hash: String::new(),
        draw_index: i,
    }
}

#[test]
fn classify_wire_batches_and_scores() {
    let server = MockServer::start(vec![(503, "", "busy")], classify_by_keyword());
    let oracle = HttpClassifier::new(&server.url).with_batch_size(2).with_retry(fast_retry(3));
    let data = vec![
        example("a good film", "positive", 0),
        example("dull", "negative", 1),
        example("good acting", "negative", 2),
        example("bad", "negative", 3),
        example("so good", "positive", 4),
    ];
    let acc = label_preservation(&data, &oracle).unwrap();
    assert!((acc - 0.8).abs() < 1e-12);
    let reqs = server.requests();
    // One retried batch plus three successful ones.
    assert_eq!(reqs.len(), 4);
    assert!(reqs.iter().all(|r| r.path == "/classify"));
    assert_eq!(reqs[1].body, json!({"texts": ["a good film", "dull"]}));
    assert_eq!(reqs[3].body, json!({"texts": ["so good"]}));
}

#[test]
fn classify_length_mismatch_is_an_oracle_error() {
    let server = MockServer::start(vec![(200, "", "{\"labels\": [\"x\"]}")], no_fallback());
    let oracle = HttpClassifier::new(&server.url).with_retry(fast_retry(1));
    let err = oracle.classify(&["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, Error::Oracle(_)), "{err}");
    assert!(err.to_string().contains("2 texts"), "{err}");
}

#[test]
fn pipeline_talks_to_an_http_teacher() {
    let server = MockServer::start(
        vec![],
        Box::new(|req| {
            let prompt = req.body["messages"][0]["content"].as_str().unwrap();
            let n = prompt.len();
            (200, vec![], chat(&format!("generated from a {n}-byte prompt")))
        }),
    );
    let dir = tempfile::tempdir().unwrap();
    let toy = common::toy_dir();
    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        format!(
            "task = \"ag_news\"\n[data]\ncorpus = {:?}\nseeds = {:?}\n[retrieval]\nk_retrieve = 10\nk_expand = 1\n[synthesis]\nmode = \"retricl\"\nn_shots = 1\n[llm]\nprovider = \"http\"\nbase_url = {:?}\nmodel = \"teacher\"\nrpm = 10000\nmax_in_flight = 4\n",
            toy.join("corpus.jsonl").display().to_string(),
            toy.join("seeds.jsonl").display().to_string(),
            server.url,
        ),
    )
    .unwrap();
    Pipeline::from_file(&config, &Overrides::default(), false)
        .unwrap()
        .run(Stage::All)
        .unwrap();
    let data = common::read_lines(&dir.path().join("out").join(artifacts::DATASET));
    assert_eq!(data.len(), 20);
    assert_eq!(server.requests().len(), 20);
    assert!(server.requests().iter().all(|r| r.body["model"] == "teacher"));
    let cache = fs::read_to_string(dir.path().join("out").join(artifacts::CACHE)).unwrap();
    assert_eq!(cache.lines().count(), 20);
}
