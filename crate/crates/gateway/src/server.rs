//! HTTP surface: the chat-completions proxy and the review API.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::serve::ListenerExt;
use axum::body::{Body, Bytes};
use axum::extract::{ConnectInfo, Path, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use eventsource_stream::Eventsource;
use futures::StreamExt;
use pseudogate_core::corpus::PromptFlags;
use pseudogate_core::{EntityMapping, RestorePlan, StreamRestorer};
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::audit::{AuditCounts, AuditEntry, AuditLog, Latency};
use crate::config::{GatewayConfig, PrivacyMode, Secret};
use crate::pipeline::{ms_since, session_seed, Pipeline, PipelineError, Protected};
use crate::review::{LabelSubmission, ReviewError, ReviewStore};
use crate::session::{self, SessionStore};

pub const SESSION_HEADER: &str = "x-session-id";
const MAX_BODY: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct Upstream {
    client: reqwest::Client,
    base_url: String,
    token: Option<Secret>,
}

impl Upstream {
    pub fn new(base_url: impl Into<String>, token: Option<Secret>, timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .connect_timeout(timeout.min(Duration::from_secs(30)))
            .read_timeout(timeout)
            .build()
            .expect("http client");
        Self { client, base_url: base_url.into(), token }
    }

    fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    async fn send(&self, body: Bytes, client_headers: &HeaderMap) -> Result<reqwest::Response, reqwest::Error> {
        let mut req = self.client.post(self.chat_url()).header(header::CONTENT_TYPE, "application/json").body(body);
        match &self.token {
            Some(token) => req = req.bearer_auth(token.expose()),
            None => {
                if let Some(auth) = client_headers.get(header::AUTHORIZATION) {
                    req = req.header(header::AUTHORIZATION, auth.clone());
                }
            }
        }
        req.send().await
    }
}

pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub sessions: Arc<SessionStore>,
    pub audit: Arc<AuditLog>,
    pub review: Arc<ReviewStore>,
    pub upstream: Upstream,
    pub seed: u64,
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/v1/chat/completions", post(chat))
        .route("/v1/review/exchanges", get(list_exchanges))
        .route("/v1/review/exchanges/{id}", get(get_exchange))
        .route("/v1/review/exchanges/{id}/labels", post(submit_label))
        .route("/v1/review/exchanges/{id}/flags", post(set_flags))
        .with_state(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", tower_http::services::ServeDir::new(dir));
    }
    app
}

fn error_response(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = json!({"error": {"message": message.into(), "type": kind, "code": Value::Null}});
    (status, Json(body)).into_response()
}

// ---- review API ----

async fn list_exchanges(State(st): State<Arc<AppState>>) -> Response {
    Json(st.review.list()).into_response()
}

fn review_error(e: ReviewError) -> Response {
    let status = match e {
        ReviewError::EmptyAnnotator => StatusCode::BAD_REQUEST,
        _ => StatusCode::NOT_FOUND,
    };
    error_response(status, "review_error", e.to_string())
}

async fn get_exchange(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.review.get(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => review_error(e),
    }
}

async fn submit_label(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(sub): Json<LabelSubmission>) -> Response {
    match st.review.submit_label(&id, sub) {
        Ok(ack) => Json(json!({"ack": true, "label": ack})).into_response(),
        Err(e) => review_error(e),
    }
}

async fn set_flags(State(st): State<Arc<AppState>>, Path(id): Path<String>, Json(flags): Json<PromptFlags>) -> Response {
    match st.review.set_flags(&id, flags) {
        Ok(flags) => Json(json!({"ack": true, "flags": flags})).into_response(),
        Err(e) => review_error(e),
    }
}

// ---- chat proxy ----

fn session_id(headers: &HeaderMap, peer: Option<SocketAddr>) -> String {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| match peer {
            Some(addr) => format!("conn-{addr}"),
            None => "conn-unknown".to_string(),
        })
}

/// Text slots of a message's `content`: the string itself or each text part.
fn content_texts(message: &mut Value) -> Vec<&mut String> {
    match message.get_mut("content") {
        Some(Value::String(s)) => vec![s],
        Some(Value::Array(parts)) => parts
            .iter_mut()
            .filter_map(|p| match p.get_mut("text") {
                Some(Value::String(s)) => Some(s),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn map_strings(value: &mut Value, f: &dyn Fn(&str) -> String) {
    match value {
        Value::String(s) => *s = f(s),
        Value::Array(items) => items.iter_mut().for_each(|v| map_strings(v, f)),
        Value::Object(map) => map.values_mut().for_each(|v| map_strings(v, f)),
        _ => {}
    }
}

struct Exchange {
    session_id: String,
    stream: bool,
    started: Instant,
    counts: AuditCounts,
    degraded: bool,
    latency: Latency,
}

impl Exchange {
    fn entry(&self, st: &AppState, protected: bool, status: Option<u16>, error: Option<String>) -> AuditEntry {
        let mut latency = self.latency;
        latency.total_ms = ms_since(self.started);
        AuditEntry {
            timestamp: Utc::now(),
            session_id: self.session_id.clone(),
            mode: st.pipeline.mode,
            protected,
            counts: self.counts,
            backend: st.pipeline.backend_name().to_string(),
            degraded: self.degraded,
            stream: self.stream,
            status,
            error,
            latency,
        }
    }
}

async fn chat(State(st): State<Arc<AppState>>, req: Request) -> Response {
    let started = Instant::now();
    let peer = req.extensions().get::<ConnectInfo<SocketAddr>>().map(|c| c.0);
    let headers = req.headers().clone();
    let sid = session_id(&headers, peer);
    let raw = match axum::body::to_bytes(req.into_body(), MAX_BODY).await {
        Ok(b) => b,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "invalid_request_error", e.to_string()),
    };
    let mut body: Value = match serde_json::from_slice(&raw) {
        Ok(v @ Value::Object(_)) => v,
        Ok(_) => return error_response(StatusCode::BAD_REQUEST, "invalid_request_error", "body must be a JSON object"),
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "invalid_request_error", format!("invalid JSON: {e}")),
    };
    let stream = body.get("stream").and_then(Value::as_bool).unwrap_or(false);
    let latest = body
        .get("messages")
        .and_then(Value::as_array)
        .and_then(|msgs| msgs.iter().rposition(|m| m.get("role").and_then(Value::as_str) == Some("user")));
    let Some(latest) = latest else {
        return error_response(StatusCode::BAD_REQUEST, "invalid_request_error", "request has no user message");
    };
    let mut ex = Exchange {
        session_id: sid.clone(),
        stream,
        started,
        counts: AuditCounts::default(),
        degraded: false,
        latency: Latency::default(),
    };

    if st.pipeline.mode == PrivacyMode::Off {
        return forward_untouched(st, ex, raw, &headers).await;
    }

    // Session work runs under the session's lock so turns of one
    // conversation see each other's mappings.
    let handle = st.sessions.get_or_create(&sid).await;
    let (plan, upstream_body) = {
        let mut record = handle.lock().await;
        let history = session::history(&record);
        let messages = body["messages"].as_array_mut().expect("checked above");
        let originals: Vec<String> = content_texts(&mut messages[latest]).into_iter().map(|s| s.clone()).collect();

        let pipeline = st.pipeline.clone();
        let seed = session_seed(st.seed, &sid);
        let texts = originals.clone();
        let protected = tokio::task::spawn_blocking(move || protect_all(&pipeline, &texts, seed, &history)).await;
        let protected = match protected {
            Ok(Ok(p)) => p,
            Ok(Err(e)) => {
                st.audit.record(&ex.entry(&st, false, None, Some(e.to_string())));
                return error_response(StatusCode::INTERNAL_SERVER_ERROR, "privacy_gateway_error", e.to_string());
            }
            Err(_) => {
                st.audit.record(&ex.entry(&st, false, None, Some("pseudonymizer panicked".into())));
                return error_response(StatusCode::INTERNAL_SERVER_ERROR, "privacy_gateway_error", "pseudonymizer panicked");
            }
        };

        let mut turn = EntityMapping::new();
        for p in &protected {
            ex.counts.detected += p.detected;
            ex.degraded |= p.degraded;
            ex.latency.detect_ms += p.detect_ms;
            ex.latency.pseudonymize_ms += p.pseudonymize_ms;
            for pair in &p.result.mapping.pairs {
                if !turn.pairs.contains(pair) {
                    turn.pairs.push(pair.clone());
                }
            }
        }
        ex.counts.replaced = turn.replaced_pairs().count();
        ex.counts.kept = turn.kept_pairs().count();

        record.mappings.push(turn);
        record.touch(st.sessions.now());

        // Earlier messages come back from the client restored; map known
        // originals (this turn's included) onto their pseudonyms again.
        let forward = RestorePlan::from_pairs(
            record.replaced_pairs_recent_first().map(|p| (p.original.clone(), p.pseudonym.clone())),
        );
        for (i, message) in messages.iter_mut().enumerate() {
            if i == latest {
                for (slot, p) in content_texts(message).into_iter().zip(&protected) {
                    *slot = p.result.modified_prompt.clone();
                }
            } else if !forward.is_empty() {
                for slot in content_texts(message) {
                    *slot = pseudogate_core::restore(slot, &forward);
                }
            }
        }

        let plan = RestorePlan::from_mappings(&record.mappings).without_pseudonyms_in(&originals.join("\n"));
        (plan, Bytes::from(serde_json::to_vec(&body).expect("JSON value serializes")))
    };
    if let Err(e) = st.sessions.save().await {
        log::error!("{e}");
    }

    let t = Instant::now();
    let resp = match st.upstream.send(upstream_body, &headers).await {
        Ok(r) => r,
        Err(e) => {
            let msg = format!("upstream unreachable: {}", e.without_url());
            st.audit.record(&ex.entry(&st, true, None, Some(msg.clone())));
            return error_response(StatusCode::BAD_GATEWAY, "upstream_error", msg);
        }
    };
    ex.latency.upstream_ms = ms_since(t);
    let status = resp.status();
    let is_sse = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("text/event-stream"));

    if status.is_success() && is_sse {
        return restore_sse(st, ex, resp, plan);
    }

    let content_type = resp.headers().get(header::CONTENT_TYPE).cloned();
    let bytes = match resp.bytes().await {
        Ok(b) => b,
        Err(e) => {
            let msg = format!("upstream body: {}", e.without_url());
            st.audit.record(&ex.entry(&st, true, Some(status.as_u16()), Some(msg.clone())));
            return error_response(StatusCode::BAD_GATEWAY, "upstream_error", msg);
        }
    };
    ex.latency.upstream_ms = ms_since(t);
    let t = Instant::now();
    let pipeline = st.pipeline.clone();
    let success = status.is_success();
    let restored = tokio::task::spawn_blocking(move || restore_body(&pipeline, &bytes, &plan, success)).await;
    let (out, degraded) = restored.unwrap_or_else(|_| (Bytes::new(), true));
    ex.latency.restore_ms = ms_since(t);
    ex.degraded |= degraded;
    st.audit.record(&ex.entry(&st, true, Some(status.as_u16()), None));

    let mut response = Response::new(Body::from(out));
    *response.status_mut() = StatusCode::from_u16(status.as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
    if let Some(ct) = content_type {
        response.headers_mut().insert(header::CONTENT_TYPE, ct);
    }
    response
}

fn protect_all(
    pipeline: &Pipeline,
    texts: &[String],
    seed: pseudogate_core::Seed,
    history: &EntityMapping,
) -> Result<Vec<Protected>, PipelineError> {
    let mut seen = history.clone();
    let mut out = Vec::with_capacity(texts.len());
    for text in texts {
        let p = pipeline.protect(text, seed, &seen)?;
        let mut merged = p.result.mapping.pairs.clone();
        merged.extend(seen.pairs);
        seen = EntityMapping { pairs: merged };
        out.push(p);
    }
    Ok(out)
}

/// Restores message content of a success body, or every string of an error
/// body. Non-JSON bodies are restored as text.
fn restore_body(pipeline: &Pipeline, bytes: &[u8], plan: &RestorePlan, success: bool) -> (Bytes, bool) {
    if plan.is_empty() {
        return (Bytes::copy_from_slice(bytes), false);
    }
    let degraded = std::cell::Cell::new(false);
    let restore = |s: &str| {
        let (out, d) = pipeline.restore(s, plan);
        degraded.set(degraded.get() | d);
        out
    };
    match serde_json::from_slice::<Value>(bytes) {
        Ok(mut v) => {
            if success {
                if let Some(choices) = v.get_mut("choices").and_then(Value::as_array_mut) {
                    for choice in choices {
                        if let Some(message) = choice.get_mut("message") {
                            for slot in content_texts(message) {
                                *slot = restore(slot);
                            }
                        }
                    }
                }
            } else {
                map_strings(&mut v, &restore);
            }
            (Bytes::from(serde_json::to_vec(&v).expect("JSON value serializes")), degraded.get())
        }
        Err(_) => match std::str::from_utf8(bytes) {
            Ok(text) => (Bytes::from(restore(text)), degraded.get()),
            Err(_) => (Bytes::copy_from_slice(bytes), false),
        },
    }
}

async fn forward_untouched(st: Arc<AppState>, mut ex: Exchange, raw: Bytes, headers: &HeaderMap) -> Response {
    let t = Instant::now();
    let resp = match st.upstream.send(raw, headers).await {
        Ok(r) => r,
        Err(e) => {
            let msg = format!("upstream unreachable: {}", e.without_url());
            st.audit.record(&ex.entry(&st, false, None, Some(msg.clone())));
            return error_response(StatusCode::BAD_GATEWAY, "upstream_error", msg);
        }
    };
    ex.latency.upstream_ms = ms_since(t);
    let status = StatusCode::from_u16(resp.status().as_u16()).unwrap_or(StatusCode::BAD_GATEWAY);
    st.audit.record(&ex.entry(&st, false, Some(status.as_u16()), None));
    let copied: Vec<_> = [header::CONTENT_TYPE, header::CACHE_CONTROL]
        .into_iter()
        .filter_map(|name| resp.headers().get(&name).cloned().map(|v| (name, v)))
        .collect();
    let mut response = Response::new(Body::from_stream(resp.bytes_stream()));
    *response.status_mut() = status;
    response.headers_mut().extend(copied);
    response
}

fn sse_frame(event: &str, data: &str) -> Bytes {
    let mut out = String::new();
    if !event.is_empty() && event != "message" {
        out.push_str("event: ");
        out.push_str(event);
        out.push('\n');
    }
    for line in data.split('\n') {
        out.push_str("data: ");
        out.push_str(line);
        out.push('\n');
    }
    out.push('\n');
    Bytes::from(out)
}

/// A chunk carrying only `text` for choice `index`, shaped like `template`.
fn flush_chunk(template: Option<&Value>, index: u64, text: String) -> Value {
    let mut chunk = template.cloned().unwrap_or_else(|| json!({"object": "chat.completion.chunk"}));
    chunk["choices"] = json!([{"index": index, "delta": {"content": text}, "finish_reason": Value::Null}]);
    chunk
}

struct SseRestore {
    plan: RestorePlan,
    restorers: BTreeMap<u64, StreamRestorer>,
    template: Option<Value>,
}

impl SseRestore {
    fn restorer(&mut self, index: u64) -> &mut StreamRestorer {
        let plan = &self.plan;
        self.restorers.entry(index).or_insert_with(|| StreamRestorer::new(plan.clone()))
    }

    /// Rewrites one data payload in place. Returns `None` for non-JSON data.
    fn chunk(&mut self, data: &str) -> Option<String> {
        let mut v: Value = serde_json::from_str(data).ok()?;
        if let Some(choices) = v.get_mut("choices").and_then(Value::as_array_mut) {
            for choice in choices {
                let index = choice.get("index").and_then(Value::as_u64).unwrap_or(0);
                let finished = choice.get("finish_reason").is_some_and(|f| !f.is_null());
                let incoming = choice.pointer("/delta/content").and_then(Value::as_str).map(str::to_string);
                let r = self.restorer(index);
                let mut out = incoming.as_deref().map(|s| r.push(s));
                if finished {
                    let rest = r.finish();
                    if !rest.is_empty() || out.is_some() {
                        out = Some(out.unwrap_or_default() + &rest);
                    }
                }
                if let Some(text) = out {
                    if let Some(delta) = choice.get_mut("delta").and_then(Value::as_object_mut) {
                        delta.insert("content".into(), Value::String(text));
                    } else {
                        choice["delta"] = json!({"content": text});
                    }
                }
            }
        }
        let mut template = v.clone();
        template.as_object_mut().map(|o| o.remove("usage"));
        self.template = Some(template);
        Some(serde_json::to_string(&v).expect("JSON value serializes"))
    }

    /// Chunks for text still held back, emitted before `[DONE]` or on abort.
    fn drain(&mut self, abort: bool) -> Vec<Value> {
        let template = self.template.clone();
        let mut out = Vec::new();
        for (&index, r) in self.restorers.iter_mut() {
            let text = if abort { r.abort() } else { r.finish() };
            if !text.is_empty() {
                out.push(flush_chunk(template.as_ref(), index, text));
            }
        }
        out
    }
}

fn restore_sse(st: Arc<AppState>, mut ex: Exchange, resp: reqwest::Response, plan: RestorePlan) -> Response {
    let status = resp.status().as_u16();
    let (tx, rx) = mpsc::channel::<Result<Bytes, std::io::Error>>(32);
    tokio::spawn(async move {
        let mut events = resp.bytes_stream().eventsource();
        let mut state = SseRestore { plan, restorers: BTreeMap::new(), template: None };
        let mut restore_time = Duration::ZERO;
        let mut error = None;
        while let Some(event) = events.next().await {
            let event = match event {
                Ok(e) => e,
                Err(e) => {
                    error = Some(format!("upstream stream broke: {e}"));
                    break;
                }
            };
            let t = Instant::now();
            let frames: Vec<Bytes> = if event.data.trim() == "[DONE]" {
                let mut f: Vec<Bytes> =
                    state.drain(false).iter().map(|c| sse_frame("", &c.to_string())).collect();
                f.push(sse_frame(&event.event, &event.data));
                f
            } else {
                let data = state.chunk(&event.data).unwrap_or(event.data);
                vec![sse_frame(&event.event, &data)]
            };
            restore_time += t.elapsed();
            let mut gone = false;
            for frame in frames {
                if tx.send(Ok(frame)).await.is_err() {
                    gone = true;
                    break;
                }
            }
            if gone {
                error = Some("client disconnected".into());
                break;
            }
        }
        // flush held-back text verbatim
        for chunk in state.drain(true) {
            if tx.send(Ok(sse_frame("", &chunk.to_string()))).await.is_err() {
                break;
            }
        }
        ex.latency.restore_ms = restore_time.as_secs_f64() * 1000.0;
        st.audit.record(&ex.entry(&st, true, Some(status), error));
    });
    let body = Body::from_stream(futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|x| (x, rx)) }));
    let mut response = Response::new(body);
    response.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static("text/event-stream"));
    response.headers_mut().insert(header::CACHE_CONTROL, HeaderValue::from_static("no-cache"));
    response
}

/// Builds every piece from config and serves until ctrl-c.
pub async fn serve(cfg: GatewayConfig) -> Result<(), Box<dyn std::error::Error>> {
    let pipeline = {
        let cfg = cfg.clone();
        tokio::task::spawn_blocking(move || Pipeline::from_config(&cfg)).await??
    };
    let mut sessions = SessionStore::new(cfg.session.ttl_secs, Arc::new(session::SystemClock));
    if let Some(path) = &cfg.session.persist_path {
        sessions = sessions.with_persistence(cfg.resolve(path))?;
    }
    let sessions = Arc::new(sessions);
    let audit = match &cfg.audit_path {
        Some(p) => AuditLog::open(cfg.resolve(p))?,
        None => AuditLog::disabled(),
    };
    let review = match &cfg.review.tasks_path {
        Some(p) => ReviewStore::load(&cfg.resolve(p), cfg.review.labels_path.as_ref().map(|l| cfg.resolve(l)).as_deref())?,
        None => ReviewStore::default(),
    };
    let token = cfg.upstream_token();
    if token.is_none() {
        log::info!("{} not set; client Authorization headers are forwarded", cfg.upstream.token_env);
    }
    let state = Arc::new(AppState {
        pipeline: Arc::new(pipeline),
        sessions: sessions.clone(),
        audit: Arc::new(audit),
        review: Arc::new(review),
        upstream: Upstream::new(&cfg.upstream.base_url, token, Duration::from_millis(cfg.upstream.timeout_ms)),
        seed: cfg.seed,
    });

    let sweeper = {
        let sessions = sessions.clone();
        let every = Duration::from_secs(cfg.session.sweep_interval_secs.max(1));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let n = sessions.sweep().await;
                if n > 0 {
                    log::info!("purged {n} idle sessions");
                    if let Err(e) = sessions.save().await {
                        log::error!("{e}");
                    }
                }
            }
        })
    };

    let ui_dir = cfg.review.ui_dir.as_ref().map(|d| cfg.resolve(d));
    let app = router(state, ui_dir);
    let listener = tokio::net::TcpListener::bind(cfg.listen).await?;
    log::info!("listening on {} (mode {}, upstream {})", listener.local_addr()?, cfg.mode, cfg.upstream.base_url);
    // SSE frames are small writes; without this they stall on delayed ACKs.
    let listener = listener.tap_io(|tcp| {
        let _ = tcp.set_nodelay(true);
    });
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    sweeper.abort();
    sessions.save().await?;
    Ok(())
}
