#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::serve::ListenerExt;
use axum::{Json, Router};
use pseudogate_core::{bundled, RelevanceLabel};
use pseudogate_gateway::audit::AuditLog;
use pseudogate_gateway::review::ReviewStore;
use pseudogate_gateway::session::{SessionStore, SystemClock};
use pseudogate_gateway::{router, AppState, Pipeline, PrivacyMode, Upstream};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reply {
    /// The latest user message, verbatim.
    Echo,
    /// "The weather in <city> is sunny." for "... weather in <city>?".
    Weather,
}

/// Records every request body it receives.
#[derive(Clone)]
pub struct Stub {
    pub url: String,
    pub log: Arc<Mutex<Vec<String>>>,
    /// Raw bytes of the last response sent.
    pub last_response: Arc<Mutex<Vec<u8>>>,
}

impl Stub {
    pub fn received(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }
}

struct StubState {
    reply: Reply,
    log: Arc<Mutex<Vec<String>>>,
    last_response: Arc<Mutex<Vec<u8>>>,
}

fn text_of(content: &Value) -> String {
    match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""),
        _ => String::new(),
    }
}

fn reply_text(reply: Reply, prompt: &str) -> String {
    match reply {
        Reply::Echo => prompt.to_string(),
        Reply::Weather => {
            let city = prompt
                .split_once("weather in ")
                .map(|(_, rest)| rest.split(['?', '.']).next().unwrap_or(rest).trim().to_string())
                .unwrap_or_default();
            format!("The weather in {city} is sunny.")
        }
    }
}

async fn stub_chat(State(st): State<Arc<StubState>>, body: Bytes) -> Response {
    let raw = String::from_utf8(body.to_vec()).unwrap();
    st.log.lock().unwrap().push(raw.clone());
    let req: Value = serde_json::from_str(&raw).unwrap();
    let prompt = req["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .map(|m| text_of(&m["content"]))
        .unwrap_or_default();
    let model = req["model"].clone();
    if prompt.contains("FAIL") {
        let body = json!({"error": {"message": format!("cannot handle: {prompt}"), "type": "invalid_request_error"}});
        *st.last_response.lock().unwrap() = serde_json::to_vec(&body).unwrap();
        return (StatusCode::BAD_REQUEST, Json(body)).into_response();
    }
    let content = reply_text(st.reply, &prompt);
    if req["stream"] == json!(true) {
        let chars: Vec<char> = content.chars().collect();
        let mut frames = Vec::new();
        let chunk = |delta: Value, finish: Value| {
            json!({"id": "chatcmpl-stub", "object": "chat.completion.chunk", "created": 1, "model": model,
                   "choices": [{"index": 0, "delta": delta, "logprobs": null, "finish_reason": finish}]})
        };
        frames.push(chunk(json!({"role": "assistant", "content": ""}), Value::Null));
        for piece in chars.chunks(4) {
            frames.push(chunk(json!({"content": piece.iter().collect::<String>()}), Value::Null));
        }
        frames.push(chunk(json!({}), json!("stop")));
        let mut out = String::new();
        for f in frames {
            out.push_str(&format!("data: {f}\n\n"));
        }
        out.push_str("data: [DONE]\n\n");
        *st.last_response.lock().unwrap() = out.clone().into_bytes();
        let stream = futures::stream::iter(out.into_bytes().chunks(7).map(|c| Ok::<_, std::io::Error>(Bytes::copy_from_slice(c))).collect::<Vec<_>>());
        let mut resp = Response::new(Body::from_stream(stream));
        resp.headers_mut().insert(header::CONTENT_TYPE, "text/event-stream".parse().unwrap());
        return resp;
    }
    let body = json!({
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "created": 1,
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "logprobs": null, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2},
        "system_fingerprint": "fp_stub"
    });
    let bytes = serde_json::to_vec(&body).unwrap();
    *st.last_response.lock().unwrap() = bytes.clone();
    let mut resp = Response::new(Body::from(bytes));
    resp.headers_mut().insert(header::CONTENT_TYPE, "application/json".parse().unwrap());
    resp
}

pub async fn spawn_stub(reply: Reply) -> Stub {
    let log = Arc::new(Mutex::new(Vec::new()));
    let last_response = Arc::new(Mutex::new(Vec::new()));
    let state = Arc::new(StubState { reply, log: log.clone(), last_response: last_response.clone() });
    let app = Router::new().route("/v1/chat/completions", post(stub_chat)).with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let listener = listener.tap_io(|tcp| {
        let _ = tcp.set_nodelay(true);
    });
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Stub { url: format!("http://{addr}/v1"), log, last_response }
}

pub struct Gateway {
    pub url: String,
    pub state: Arc<AppState>,
    pub audit_path: PathBuf,
    _dir: tempfile::TempDir,
}

impl Gateway {
    pub fn audit(&self) -> String {
        std::fs::read_to_string(&self.audit_path).unwrap_or_default()
    }

    pub fn audit_entries(&self) -> Vec<Value> {
        self.audit().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
    }
}

pub async fn spawn_gateway(pipeline: Pipeline, upstream: &str, review: ReviewStore) -> Gateway {
    let dir = tempfile::tempdir().unwrap();
    let audit_path = dir.path().join("audit.jsonl");
    let state = Arc::new(AppState {
        pipeline: Arc::new(pipeline),
        sessions: Arc::new(SessionStore::new(3600, Arc::new(SystemClock))),
        audit: Arc::new(AuditLog::open(&audit_path).unwrap()),
        review: Arc::new(review),
        upstream: Upstream::new(upstream, None, Duration::from_secs(10)),
        seed: 7,
    });
    let app = router(state.clone(), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let listener = listener.tap_io(|tcp| {
        let _ = tcp.set_nodelay(true);
    });
    tokio::spawn(async move { axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>()).await.unwrap() });
    Gateway { url: format!("http://{addr}"), state, audit_path, _dir: dir }
}

/// Bundled data; "Palo Alto" forced irrelevant as in the weather example.
pub fn bundled_pipeline(mode: PrivacyMode) -> Pipeline {
    let relevance = bundled::relevance().unwrap().with_override("Palo Alto", RelevanceLabel::Irrelevant);
    Pipeline::new(bundled::detector().unwrap(), relevance, bundled::pools().unwrap(), mode)
}

pub fn user(content: &str) -> Value {
    json!({"model": "stub-model", "messages": [{"role": "user", "content": content}]})
}

pub async fn post_chat(gw: &Gateway, session: Option<&str>, body: &Value) -> (u16, Vec<u8>) {
    static CLIENT: OnceLock<reqwest::Client> = OnceLock::new();
    let mut req = CLIENT.get_or_init(reqwest::Client::new).post(format!("{}/v1/chat/completions", gw.url)).json(body);
    if let Some(s) = session {
        req = req.header("x-session-id", s);
    }
    let resp = req.send().await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.bytes().await.unwrap().to_vec())
}

pub async fn chat_content(gw: &Gateway, session: Option<&str>, body: &Value) -> String {
    let (status, bytes) = post_chat(gw, session, body).await;
    assert_eq!(status, 200, "{}", String::from_utf8_lossy(&bytes));
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["choices"][0]["message"]["content"].as_str().unwrap().to_string()
}

/// Concatenated `delta.content` of a streamed answer.
pub async fn chat_stream(gw: &Gateway, session: Option<&str>, body: &Value) -> (String, String) {
    let mut body = body.clone();
    body["stream"] = json!(true);
    let (status, bytes) = post_chat(gw, session, &body).await;
    assert_eq!(status, 200);
    let raw = String::from_utf8(bytes).unwrap();
    let mut text = String::new();
    for line in raw.lines() {
        if let Some(data) = line.strip_prefix("data: ") {
            if data == "[DONE]" {
                continue;
            }
            let v: Value = serde_json::from_str(data).unwrap();
            for c in v["choices"].as_array().unwrap() {
                if let Some(s) = c["delta"]["content"].as_str() {
                    text.push_str(s);
                }
            }
        }
    }
    (text, raw)
}

/// Word-bounded, case-insensitive containment.
pub fn mentions(hay: &str, needle: &str) -> bool {
    let chars: Vec<char> = hay.chars().collect();
    !pseudogate_core::text::find_word_bounded_ci(&chars, needle).is_empty()
}
