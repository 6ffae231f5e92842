//! HTTP clients against in-process mock servers.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use kgqa_core::config::{EmbedderConfig, LlmBackendConfig};
use kgqa_core::desk;
use kgqa_core::kg::{parse_query, HttpEndpoint, KgError, KgTarget, ResultSet, SparqlQuery, Term};
use kgqa_core::llm::{HttpBackend, LlmBackend, LlmError, LlmRequest, PromptLibrary};
use kgqa_core::matching::{Embedder, HttpEmbedder, TrigramEmbedder};
use kgqa_core::orchestrator::Engine;
use kgqa_core::Answer;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Request {
    headers: BTreeMap<String, String>,
    body: String,
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

/// Serves every connection on a background thread; returns the base URL and
/// the log of received requests.
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = BTreeMap::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    headers.insert(k.trim().to_lowercase(), v.trim().to_string());
                }
            }
            let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let request = Request {
                headers,
                body: String::from_utf8(body).unwrap(),
            };
            let (status, body) = handler(&request);
            seen.lock().unwrap().push(request);
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (url, log)
}

fn form_value(body: &str, key: &str) -> Option<String> {
    body.split('&').find_map(|pair| {
        let (k, v) = pair.split_once('=')?;
        (k == key).then(|| percent_decode(v))
    })
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => out.push(b' '),
            b'%' => {
                out.push(u8::from_str_radix(&s[i + 1..i + 3], 16).unwrap());
                i += 2;
            }
            b => out.push(b),
        }
        i += 1;
    }
    String::from_utf8(out).unwrap()
}

fn term_json(t: &Term) -> Value {
    match t {
        Term::Iri { value } => json!({"type": "uri", "value": value}),
        Term::Blank { value } => json!({"type": "bnode", "value": value}),
        Term::Literal { value, datatype, lang } => {
            let mut v = json!({"type": "literal", "value": value});
            if let Some(d) = datatype {
                v["datatype"] = json!(d);
            }
            if let Some(l) = lang {
                v["xml:lang"] = json!(l);
            }
            v
        }
    }
}

fn results_json(rs: &ResultSet) -> Value {
    match rs {
        ResultSet::Boolean { value } => json!({"head": {}, "boolean": value}),
        ResultSet::Count { value } => json!({
            "head": {"vars": ["count"]},
            "results": {"bindings": [{"count": {"type": "literal", "value": value.to_string(),
                "datatype": "http://www.w3.org/2001/XMLSchema#integer"}}]}
        }),
        ResultSet::Rows { vars, rows } => json!({
            "head": {"vars": vars},
            "results": {"bindings": rows.iter().map(|r| {
                r.iter().map(|(k, t)| (k.clone(), term_json(t))).collect::<serde_json::Map<_, _>>()
            }).collect::<Vec<_>>()}
        }),
    }
}

/// A SPARQL endpoint answering from the desk fixture.
fn desk_endpoint() -> (String, Arc<Mutex<Vec<Request>>>) {
    let store = Arc::new(desk::store(&desk::config().label_predicates));
    serve(Arc::new(move |req: &Request| {
        let Some(text) = form_value(&req.body, "query") else {
            return (400, "missing query".into());
        };
        match parse_query(&text) {
            Ok(q) => (200, results_json(&store.evaluate(&q).unwrap()).to_string()),
            Err(e) => (400, e.to_string()),
        }
    }))
}

#[test]
fn endpoint_round_trips_all_forms() {
    let (url, log) = desk_endpoint();
    let ep = HttpEndpoint::new(&url).unwrap();
    let store = desk::store(&desk::config().label_predicates);
    let r = "http://desk.example.org/resource/";
    let o = "http://desk.example.org/ontology/";
    for text in [
        format!("ASK WHERE {{ <{r}Michelle_Obama> <{o}spouse> <{r}Barack_Obama> . }}"),
        format!("SELECT (COUNT(DISTINCT ?f) AS ?count) WHERE {{ ?f <{o}director> <{r}Chris_Columbus> . }}"),
        format!("SELECT DISTINCT ?y ?l WHERE {{ ?f <{o}releaseYear> ?y . ?f <http://www.w3.org/2000/01/rdf-schema#label> ?l . }}"),
    ] {
        let q = parse_query(&text).unwrap();
        assert_eq!(ep.execute(&q).unwrap(), store.evaluate(&q).unwrap(), "{text}");
    }
    let req = log.lock().unwrap()[0].clone();
    assert_eq!(req.headers["accept"], "application/sparql-results+json");
    assert!(req.headers["content-type"].starts_with("application/x-www-form-urlencoded"));
}

#[test]
fn endpoint_error_mapping() {
    let q = SparqlQuery::ask(vec![kgqa_core::kg::TriplePattern::new(
        kgqa_core::kg::PatternTerm::var("s"),
        kgqa_core::kg::PatternTerm::var("p"),
        kgqa_core::kg::PatternTerm::var("o"),
    )]);
    let status = |code: u16, body: &'static str| {
        let (url, _) = serve(Arc::new(move |_: &Request| (code, body.to_string())));
        HttpEndpoint::new(&url).unwrap().execute(&q)
    };
    assert!(matches!(status(400, "bad"), Err(KgError::Rejected(_))));
    assert!(matches!(status(503, "busy"), Err(KgError::Transport(_))));
    assert!(matches!(status(200, "<html>"), Err(KgError::MalformedResults(_))));
    assert!(matches!(status(200, "{\"head\":{}}"), Err(KgError::MalformedResults(_))));
    let unreachable = HttpEndpoint::new("http://127.0.0.1:9").unwrap().execute(&q);
    assert!(matches!(unreachable, Err(KgError::Transport(_))));
}

fn llm_config(url: &str, key_env: &str) -> LlmBackendConfig {
    LlmBackendConfig {
        url: url.to_string(),
        model: "test-model".into(),
        api_key_env: key_env.into(),
        timeout_secs: 5,
        ..Default::default()
    }
}

#[test]
fn chat_backend_sends_examples_and_returns_raw_text() {
    let (url, log) = serve(Arc::new(|_: &Request| {
        (200, json!({"choices": [{"message": {"role": "assistant", "content": "Self-contained"}}]}).to_string())
    }));
    std::env::set_var("KGQA_TEST_KEY_OK", "sk-test");
    let backend = HttpBackend::from_config(&llm_config(&url, "KGQA_TEST_KEY_OK")).unwrap();
    let prompts = PromptLibrary::builtin();
    let req = LlmRequest::new(prompts.extract_triples.clone()).with("question", "Who founded Intel?");
    assert_eq!(backend.complete(&req).unwrap().raw_text, "Self-contained");
    let sent = log.lock().unwrap()[0].clone();
    assert_eq!(sent.headers["authorization"], "Bearer sk-test");
    let body: Value = serde_json::from_str(&sent.body).unwrap();
    assert_eq!(body["model"], "test-model");
    let messages = body["messages"].as_array().unwrap();
    // Two few-shot pairs and the question.
    assert_eq!(messages.len(), 5);
    assert!(messages[4]["content"].as_str().unwrap().contains("Who founded Intel?"));
}

#[test]
fn chat_backend_error_mapping() {
    let prompts = PromptLibrary::builtin();
    let req = LlmRequest::new(prompts.classify.clone()).with("question", "q");
    let call = |code: u16, body: &'static str| {
        let (url, _) = serve(Arc::new(move |_: &Request| (code, body.to_string())));
        HttpBackend::from_config(&llm_config(&url, "KGQA_TEST_KEY_UNSET")).unwrap().complete(&req)
    };
    let e = call(429, "slow down").unwrap_err();
    assert!(e.is_retriable());
    let e = call(401, "no key").unwrap_err();
    assert!(matches!(e, LlmError::Refused { .. }));
    assert!(call(200, "{}").unwrap_err().is_retriable());
}

#[test]
fn embedder_parses_and_caches() {
    let (url, log) = serve(Arc::new(|req: &Request| {
        let body: Value = serde_json::from_str(&req.body).unwrap();
        let n = body["input"].as_str().unwrap().len() as f64;
        (200, json!({"data": [{"embedding": [n, 1.0]}]}).to_string())
    }));
    let config = EmbedderConfig {
        url,
        api_key_env: "KGQA_TEST_KEY_UNSET".into(),
        ..Default::default()
    };
    let e = HttpEmbedder::from_config(&config).unwrap();
    assert_eq!(e.embed("abc").unwrap(), vec![3.0, 1.0]);
    assert_eq!(e.embed("abc").unwrap(), vec![3.0, 1.0]);
    assert_eq!(log.lock().unwrap().len(), 1);
    assert!(!log.lock().unwrap()[0].headers.contains_key("authorization"));
}

#[test]
fn engine_answers_over_a_remote_endpoint() {
    let (url, log) = desk_endpoint();
    let config = desk::config();
    let engine = Engine::new(
        config,
        Arc::new(desk::backend()),
        Arc::new(HttpEndpoint::new(&url).unwrap()),
        Arc::new(TrigramEmbedder::default()),
    );
    let mut s = engine.new_session();
    let r = engine.process_turn(&mut s, "Who is the author of Harry Potter?").unwrap();
    assert_eq!(r.answers.len(), 1);
    assert_eq!(r.answers[0].display_label.as_deref(), Some("J. K. Rowling"));
    let r = engine.process_turn(&mut s, "When was its first movie released?").unwrap();
    assert_eq!(r.answers, vec![Answer::literal("2001")]);
    assert!(log.lock().unwrap().len() > 5);
}
