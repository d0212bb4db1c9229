//! Chat-completions mock: checks the bearer token, answers each image with
//! a fixed reply item and can throttle its first requests.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use eegvl::client::NEUROLOGIST_INSTRUCTION;

pub const KEY: &str = "sk-test-123";
pub const REASON: &str = "served, with a comma\nand a newline";

#[derive(Default)]
pub struct Seen {
    pub requests: AtomicUsize,
    /// Image count of every request that was answered normally.
    pub images: Mutex<Vec<usize>>,
    /// Requests answered with 429 before serving normally.
    pub throttle_first: usize,
}

async fn chat(State(seen): State<Arc<Seen>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n_req = seen.requests.fetch_add(1, Ordering::SeqCst);
    if headers.get("authorization").and_then(|h| h.to_str().ok()) != Some(&format!("Bearer {KEY}")) {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    if n_req < seen.throttle_first {
        return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})));
    }
    let content = body["messages"][0]["content"].as_array().cloned().unwrap_or_default();
    let prompt = content.first().and_then(|c| c["text"].as_str()).unwrap_or("");
    if !prompt.contains(NEUROLOGIST_INSTRUCTION) {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "prompt lacks the instruction"})));
    }
    let images: Vec<&Value> = content.iter().filter(|c| c["type"] == "image_url").collect();
    if !images.iter().all(|i| i["image_url"]["url"].as_str().is_some_and(|u| u.starts_with("data:image/png;base64,"))) {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "images must be inline PNG"})));
    }
    seen.images.lock().unwrap().push(images.len());
    let items: Vec<Value> = (0..images.len())
        .map(|i| json!({"label": if i % 2 == 0 { "Muscle" } else { "line-noise" }, "confidence": 0.9, "reason": REASON}))
        .collect();
    let reply = format!("Sure.\n```json\n{}\n```", serde_json::to_string(&items).unwrap());
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": reply}}]})))
}

/// Starts the mock on an ephemeral port; returns its base URL.
pub async fn serve(seen: Arc<Seen>) -> String {
    let app = Router::new().route("/v1/chat/completions", post(chat)).with_state(seen);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}
