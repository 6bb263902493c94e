mod common;

use common::*;
use pseudogate_core::corpus::{AnnotationTask, PromptFlags, TaskSpan};
use pseudogate_core::detector::RegexRules;
use pseudogate_core::{Detector, EntityClass, EntityMapping, Gazetteer, PoolSet, RelevanceConfig};
use pseudogate_gateway::review::ReviewStore;
use pseudogate_gateway::{Pipeline, PrivacyMode};
use serde_json::{json, Value};

fn no_review() -> ReviewStore {
    ReviewStore::from_tasks(Vec::new()).unwrap()
}

fn sent_user_text(raw: &str) -> String {
    let v: Value = serde_json::from_str(raw).unwrap();
    v["messages"].as_array().unwrap().iter().rev().find(|m| m["role"] == "user").unwrap()["content"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn weather_in_an_irrelevant_city_is_pseudonymized_and_restored() {
    let stub = spawn_stub(Reply::Weather).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Gated), &stub.url, no_review()).await;
    let answer = chat_content(&gw, Some("w"), &user("What's the weather in Palo Alto?")).await;
    assert_eq!(answer, "The weather in Palo Alto is sunny.");

    let sent = sent_user_text(&stub.received()[0]);
    assert!(!mentions(&sent, "Palo Alto"), "{sent}");
    assert!(sent.starts_with("What's the weather in "));
    let entry = &gw.audit_entries()[0];
    assert_eq!(entry["protected"], json!(true));
    assert_eq!(entry["counts"]["replaced"], json!(1));
}

#[tokio::test(flavor = "multi_thread")]
async fn prompt_without_entities_is_forwarded_verbatim() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let prompt = "how do I reverse a linked list in place?";
    assert_eq!(chat_content(&gw, None, &user(prompt)).await, prompt);
    assert_eq!(sent_user_text(&stub.received()[0]), prompt);
}

#[tokio::test(flavor = "multi_thread")]
async fn off_mode_is_byte_identical_both_ways() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Off), &stub.url, no_review()).await;
    let body = json!({"model": "m", "messages": [{"role": "user", "content": "Email Maria at maria@example.com"}], "temperature": 0});
    let (status, bytes) = post_chat(&gw, Some("off"), &body).await;
    assert_eq!(status, 200);
    assert_eq!(stub.received()[0], serde_json::to_string(&body).unwrap());
    assert_eq!(bytes, *stub.last_response.lock().unwrap());

    let (_, raw) = chat_stream(&gw, Some("off"), &body).await;
    assert_eq!(raw.as_bytes(), stub.last_response.lock().unwrap().as_slice());

    let entries = gw.audit_entries();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e["protected"] == json!(false) && e["mode"] == json!("OFF")));
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_do_not_share_mappings() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    chat_content(&gw, Some("a"), &user("Say hello to Maria.")).await;
    let pseudonym = sent_user_text(&stub.received()[0])
        .trim_start_matches("Say hello to ")
        .trim_end_matches('.')
        .to_string();
    assert_ne!(pseudonym, "Maria");

    // Session b never saw Maria, so its copy of the pseudonym must not be restored.
    let answer = chat_content(&gw, Some("b"), &user(&format!("Who is {pseudonym}?"))).await;
    assert!(!answer.contains("Maria"), "{answer}");
    assert_eq!(answer, format!("Who is {pseudonym}?"));
}

#[tokio::test(flavor = "multi_thread")]
async fn later_turns_reuse_pseudonyms_and_map_history() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let first = "Write a note to Maria about Chicago.";
    let reply = chat_content(&gw, Some("s"), &user(first)).await;
    assert_eq!(reply, first);

    let second = "Make it shorter and sign it from Maria.";
    let body = json!({"model": "m", "messages": [
        {"role": "system", "content": "You are terse."},
        {"role": "user", "content": first},
        {"role": "assistant", "content": reply},
        {"role": "user", "content": second},
    ]});
    assert_eq!(chat_content(&gw, Some("s"), &body).await, second);

    let received = stub.received();
    let turn1 = sent_user_text(&received[0]);
    let v: Value = serde_json::from_str(&received[1]).unwrap();
    let msgs = v["messages"].as_array().unwrap();
    assert_eq!(msgs[0]["content"], "You are terse.");
    assert_eq!(msgs[1]["content"], turn1.as_str());
    assert_eq!(msgs[2]["content"], turn1.as_str());
    for m in msgs {
        let text = m["content"].as_str().unwrap();
        assert!(!mentions(text, "Maria") && !mentions(text, "Chicago"), "{text}");
    }
    let maria_1 = turn1.trim_start_matches("Write a note to ").split(" about").next().unwrap().to_string();
    let turn2 = msgs[3]["content"].as_str().unwrap();
    assert_eq!(turn2, format!("Make it shorter and sign it from {maria_1}."));
}

#[tokio::test(flavor = "multi_thread")]
async fn streamed_answer_is_restored() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let prompt = "Plan a trip for Maria from Chicago to Boston, and cc maria@example.com.";
    let (text, raw) = chat_stream(&gw, Some("st"), &user(prompt)).await;
    assert_eq!(text, prompt);
    assert!(raw.trim_end().ends_with("data: [DONE]"));
    assert!(raw.contains("\"finish_reason\":\"stop\""));
    let sent = sent_user_text(&stub.received()[0]);
    for original in ["Maria", "Chicago", "Boston", "maria@example.com"] {
        assert!(!mentions(&sent, original), "{original} leaked: {sent}");
    }
    assert_eq!(gw.audit_entries()[0]["stream"], json!(true));
}

#[tokio::test(flavor = "multi_thread")]
async fn text_parts_are_pseudonymized() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let body = json!({"model": "m", "messages": [{"role": "user", "content": [
        {"type": "text", "text": "Describe Chicago "},
        {"type": "text", "text": "for Maria."}
    ]}]});
    assert_eq!(chat_content(&gw, None, &body).await, "Describe Chicago for Maria.");
    let v: Value = serde_json::from_str(&stub.received()[0]).unwrap();
    let parts = v["messages"][0]["content"].as_array().unwrap();
    assert_eq!(parts.len(), 2);
    assert!(!mentions(parts[0]["text"].as_str().unwrap(), "Chicago"));
    assert!(!mentions(parts[1]["text"].as_str().unwrap(), "Maria"));
}

#[tokio::test(flavor = "multi_thread")]
async fn upstream_errors_pass_through_restored() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let (status, bytes) = post_chat(&gw, None, &user("FAIL for Maria")).await;
    assert_eq!(status, 400);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"]["message"], "cannot handle: FAIL for Maria");
    assert_eq!(v["error"]["type"], "invalid_request_error");
    assert_eq!(gw.audit_entries()[0]["status"], json!(400));
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_upstream_is_a_502() {
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), "http://127.0.0.1:9/v1", no_review()).await;
    let (status, bytes) = post_chat(&gw, None, &user("Hi Maria")).await;
    assert_eq!(status, 502);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"]["type"], "upstream_error");
    assert!(!String::from_utf8_lossy(&bytes).contains("Maria"));
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_pool_fails_closed_before_forwarding() {
    let stub = spawn_stub(Reply::Echo).await;
    let g = Gazetteer::from_entries(EntityClass::Gpe, ["Springfield"]).unwrap();
    let detector = Detector::new(vec![g], RegexRules::new(false, false)).unwrap();
    let pipeline = Pipeline::new(detector, RelevanceConfig::default(), PoolSet::default(), PrivacyMode::Strict);
    let gw = spawn_gateway(pipeline, &stub.url, no_review()).await;
    let (status, bytes) = post_chat(&gw, None, &user("I live in Springfield")).await;
    assert_eq!(status, 500);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["error"]["type"], "privacy_gateway_error");
    assert!(!String::from_utf8_lossy(&bytes).contains("Springfield"));
    assert!(stub.received().is_empty());
    assert!(!gw.audit().contains("Springfield"));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_fields_are_preserved() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let body = json!({
        "model": "m",
        "temperature": 0.25,
        "x_vendor": {"nested": [1, 2, 3]},
        "messages": [{"role": "user", "content": "Hi Maria", "name": "alice"}]
    });
    let (status, bytes) = post_chat(&gw, None, &body).await;
    assert_eq!(status, 200);
    let sent: Value = serde_json::from_str(&stub.received()[0]).unwrap();
    assert_eq!(sent["temperature"], json!(0.25));
    assert_eq!(sent["x_vendor"], body["x_vendor"]);
    assert_eq!(sent["messages"][0]["name"], "alice");
    let keys: Vec<&String> = sent.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["model", "temperature", "x_vendor", "messages"]);

    let resp: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(resp["system_fingerprint"], "fp_stub");
    assert_eq!(resp["usage"]["total_tokens"], 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_session_header_uses_connection_id() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    chat_content(&gw, None, &user("Hi Maria")).await;
    chat_content(&gw, Some("named"), &user("Hi Maria")).await;
    let entries = gw.audit_entries();
    assert!(entries[0]["session_id"].as_str().unwrap().starts_with("conn-127.0.0.1:"));
    assert_eq!(entries[1]["session_id"], "named");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_all_restore() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = std::sync::Arc::new(spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await);
    let names = ["Maria", "James", "Chicago", "Boston", "Google"];
    let mut tasks = Vec::new();
    for i in 0..24 {
        let gw = gw.clone();
        let prompt = format!("Turn {i}: ask {} about {}.", names[i % 5], names[(i + 2) % 5]);
        tasks.push(tokio::spawn(async move {
            let body = user(&prompt);
            let got = if i % 2 == 0 {
                chat_content(&gw, Some(&format!("c{}", i % 6)), &body).await
            } else {
                chat_stream(&gw, Some(&format!("c{}", i % 6)), &body).await.0
            };
            (prompt, got)
        }));
    }
    for t in tasks {
        let (prompt, got) = t.await.unwrap();
        assert_eq!(got, prompt);
    }
    assert_eq!(stub.received().len(), 24);
}

fn review_task(id: &str) -> AnnotationTask {
    AnnotationTask {
        id: id.into(),
        prompt: "Ann met Bob".into(),
        spans: vec![
            TaskSpan { index: 0, text: "Ann".into(), class: EntityClass::Person, start: 0, end: 3 },
            TaskSpan { index: 1, text: "Bob".into(), class: EntityClass::Person, start: 8, end: 11 },
        ],
        replaced_prompt: "Kim met Tom".into(),
        mapping: EntityMapping::new(),
        original_response: Some("Hello".into()),
        replaced_response: Some("Hello".into()),
        response_less: false,
        flags: PromptFlags::default(),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn review_api_round_trip() {
    let store = ReviewStore::from_tasks(vec![review_task("t1"), review_task("t2")]).unwrap();
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Gated), "http://127.0.0.1:9/v1", store).await;
    let client = reqwest::Client::new();
    let url = |p: &str| format!("{}/v1/review/exchanges{p}", gw.url);

    let list: Value = client.get(url("")).send().await.unwrap().json().await.unwrap();
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[0]["id"], "t1");
    assert_eq!(list[0]["entities"], 2);

    let label = json!({"entity_index": 1, "label": "IRRELEVANT", "annotator": "rev1"});
    let resp = client.post(url("/t1/labels")).json(&label).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let ack: Value = resp.json().await.unwrap();
    assert_eq!(ack["ack"], true);

    let view: Value = client.get(url("/t1")).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["prompt"], "Ann met Bob");
    assert_eq!(view["labels"]["rev1"], json!([null, "IRRELEVANT"]));

    let flags = client.post(url("/t2/flags")).json(&json!({"needs_review": true})).send().await.unwrap();
    assert_eq!(flags.status(), 200);
    let list: Value = client.get(url("")).send().await.unwrap().json().await.unwrap();
    assert_eq!(list[1]["flags"]["needs_review"], true);

    assert_eq!(client.get(url("/nope")).send().await.unwrap().status(), 404);
    let bad_index = json!({"entity_index": 5, "label": "RELEVANT", "annotator": "rev1"});
    assert_eq!(client.post(url("/t1/labels")).json(&bad_index).send().await.unwrap().status(), 404);
    let anonymous = json!({"entity_index": 0, "label": "RELEVANT", "annotator": ""});
    assert_eq!(client.post(url("/t1/labels")).json(&anonymous).send().await.unwrap().status(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn healthz_answers() {
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Gated), "http://127.0.0.1:9/v1", no_review()).await;
    let body = reqwest::get(format!("{}/healthz", gw.url)).await.unwrap().text().await.unwrap();
    assert_eq!(body, "ok");
}

#[tokio::test(flavor = "multi_thread")]
async fn earlier_messages_use_pairs_from_the_current_turn() {
    let stub = spawn_stub(Reply::Echo).await;
    let gw = spawn_gateway(bundled_pipeline(PrivacyMode::Strict), &stub.url, no_review()).await;
    let body = json!({"model": "m", "messages": [
        {"role": "system", "content": "The user's sister is Maria."},
        {"role": "user", "content": "Write a card for Maria."},
    ]});
    assert_eq!(chat_content(&gw, Some("fresh"), &body).await, "Write a card for Maria.");
    let sent: Value = serde_json::from_str(&stub.received()[0]).unwrap();
    let system = sent["messages"][0]["content"].as_str().unwrap();
    assert!(!mentions(system, "Maria"), "{system}");
}
