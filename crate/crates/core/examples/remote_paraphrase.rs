//! Use an external paraphrase service. A toy server stands in for the
//! real model here; point `RemoteParaphraser` at any service that speaks
//! `POST /paraphrase {text, max_candidates, seed} -> {paraphrases}`.

use std::num::NonZeroUsize;
use std::time::Duration;

use axum::routing::post;
use axum::Json;
use serde_json::{json, Value};

use ciai::augment::{ParaphraseProvider, RemoteParaphraser};

async fn paraphrase(Json(req): Json<Value>) -> Json<Value> {
    let text = req["text"].as_str().unwrap_or_default();
    let n = req["max_candidates"].as_u64().unwrap_or(1);
    let out: Vec<String> = (0..n).map(|i| format!("{text} (take {i})")).collect();
    Json(json!({ "paraphrases": out }))
}

fn main() -> anyhow::Result<()> {
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, axum::Router::new().route("/paraphrase", post(paraphrase))).await.unwrap();
        });
    });

    let remote = RemoteParaphraser::new(&format!("http://{addr}"), Duration::from_secs(5));
    let provider = ParaphraseProvider::new(Box::new(remote), NonZeroUsize::new(3).unwrap(), 0);
    for p in provider.paraphrase("describe the scene")? {
        println!("{p}");
    }
    Ok(())
}
