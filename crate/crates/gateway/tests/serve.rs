mod common;

use std::process::{Child, Command, Stdio};
use std::time::Duration;

use common::{spawn_stub, Reply};
use serde_json::{json, Value};

struct Killed(Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_binary_proxies_and_saves_sessions_on_shutdown() {
    let stub = spawn_stub(Reply::Echo).await;
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let cfg = dir.path().join("gw.toml");
    std::fs::write(
        &cfg,
        format!(
            "listen = \"127.0.0.1:{port}\"\nmode = \"STRICT\"\naudit_path = \"var/audit.jsonl\"\n\
             [upstream]\nbase_url = \"{}\"\ntoken_env = \"PSEUDOGATE_TEST_UNSET_TOKEN\"\n\
             [session]\npersist_path = \"var/sessions.json\"\n",
            stub.url
        ),
    )
    .unwrap();

    let child = Command::new(env!("CARGO_BIN_EXE_pseudogate"))
        .args(["serve", "-c", cfg.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut child = Killed(child);

    let base = format!("http://127.0.0.1:{port}");
    let client = reqwest::Client::new();
    let mut up = false;
    for _ in 0..100 {
        if client.get(format!("{base}/healthz")).send().await.is_ok() {
            up = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert!(up, "gateway did not come up");

    let body = json!({"model": "m", "messages": [{"role": "user", "content": "Book a table for Maria in Chicago"}]});
    let resp: Value = client
        .post(format!("{base}/v1/chat/completions"))
        .header("x-session-id", "persist-me")
        .header("authorization", "Bearer client-token")
        .json(&body)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(resp["choices"][0]["message"]["content"], "Book a table for Maria in Chicago");
    let sent = &stub.received()[0];
    assert!(!sent.contains("Maria") && !sent.contains("Chicago"), "{sent}");

    let status = Command::new("kill").args(["-INT", &child.0.id().to_string()]).status().unwrap();
    assert!(status.success());
    let mut exited = None;
    for _ in 0..100 {
        if let Some(s) = child.0.try_wait().unwrap() {
            exited = Some(s);
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert!(exited.expect("gateway did not stop").success());

    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("var/sessions.json")).unwrap()).unwrap();
    assert_eq!(saved[0]["session_id"], "persist-me");
    assert_eq!(saved[0]["mappings"][0]["pairs"].as_array().unwrap().len(), 2);
    let audit = std::fs::read_to_string(dir.path().join("var/audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 1);
    assert!(!audit.contains("Maria") && !audit.contains("Chicago"));
}
