//! A scripted HTTP session and `preflearn replay` fed the same seed and
//! answers end with identical belief samples.

use std::fs;
use std::process::Command;

use preflearn_service::{router, AppState};
use serde_json::{json, Value};

#[tokio::test]
async fn http_and_cli_beliefs_match() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(AppState::default(), None)).await.unwrap() });

    let config = json!({
        "environment": {"type": "gridworld", "width": 4, "height": 4, "goal": {"x": 3, "y": 3},
                        "obstacles": [], "horizon": 8, "start": {"x": 0, "y": 0}},
        "num_trajectories": 25,
        "strategy": "volume_removal",
        "sampler": {"num_samples": 40},
        "seed": 21,
    });
    let answers = [
        json!({"kind": "preference", "chosen": 0}),
        json!({"kind": "preference", "chosen": 1}),
        json!({"kind": "preference", "chosen": 1}),
        json!({"kind": "preference", "chosen": 0}),
        json!({"kind": "preference", "chosen": 0}),
    ];

    let client = reqwest::Client::new();
    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&config)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let id = created["id"].as_str().expect("session id");
    for a in &answers {
        let q = client.get(format!("{base}/sessions/{id}/query")).send().await.unwrap();
        assert!(q.status().is_success());
        let r = client
            .post(format!("{base}/sessions/{id}/response"))
            .json(a)
            .send()
            .await
            .unwrap();
        assert!(r.status().is_success());
    }
    let http: Value = client
        .get(format!("{base}/sessions/{id}/belief"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("session.json");
    fs::write(&cfg, config.to_string()).unwrap();
    let lines = dir.path().join("answers.jsonl");
    fs::write(&lines, answers.iter().map(|a| format!("{a}\n")).collect::<String>()).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_preflearn"))
        .args(["replay", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--responses")
        .arg(&lines)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cli: Value = serde_json::from_str(&fs::read_to_string(out.join("belief.json")).unwrap()).unwrap();

    assert_eq!(http["iteration"], 5);
    let samples = |v: &Value| -> Vec<Vec<f64>> { serde_json::from_value(v["samples"].clone()).unwrap() };
    assert_eq!(samples(&http), samples(&cli));
    assert_eq!(http, cli);
}
