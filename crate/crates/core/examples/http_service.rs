//! Run the HTTP service on an ephemeral port and call each endpoint.

use std::sync::Arc;
use std::time::Duration;

use ciai::classifier::BowClassifier;
use ciai::demo::demo_corpus;
use ciai::router::{AppState, Router, RouterConfig, RunningService};
use ciai::statml::{StatKind, StatParams};
use serde_json::{json, Value};

fn main() -> anyhow::Result<()> {
    let model = BowClassifier::fit(&demo_corpus(), StatKind::MultinomialNb, &StatParams::default(), 1)?;
    let router = Router::with_stub_handlers(Arc::new(model), RouterConfig::default());
    let state = AppState::new(router, Duration::from_secs(900))?;
    let service = RunningService::start("127.0.0.1:0", Arc::new(state))?;
    println!("listening on {}", service.url(""));

    let health: Value = ureq::get(&service.url("/health")).call()?.body_mut().read_json()?;
    println!("health   {health}");
    let classified: Value = ureq::post(&service.url("/classify?explain=1"))
        .send_json(json!({"text": "tell me a joke"}))?
        .body_mut()
        .read_json()?;
    println!("classify {} {}", classified["label"], classified["attribution"]["scores"]);
    let chat: Value = ureq::post(&service.url("/chat"))
        .send_json(json!({"text": "what do you see"}))?
        .body_mut()
        .read_json()?;
    println!("chat     {}", chat["reply"]);

    service.shutdown()?;
    Ok(())
}
