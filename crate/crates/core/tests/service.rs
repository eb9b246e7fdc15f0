mod common;

use std::sync::Arc;
use std::time::Duration;

use ciai::router::{AppState, ChatResponse, ClassifyResponse, HealthResponse, RunningService};
use ciai::router::{Router, RouterConfig, RoutingDecision};
use ciai::classifier::TextClassifier;
use serde_json::{json, Value};

use common::{ambiguous_row, naive_bayes, Scripted};

fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(ureq::Agent::config_builder().http_status_as_error(false).build())
}

fn start(classifier: Arc<dyn TextClassifier>, idle: Duration) -> RunningService {
    let router = Router::with_stub_handlers(classifier, RouterConfig::default());
    RunningService::start("127.0.0.1:0", Arc::new(AppState::new(router, idle).unwrap())).unwrap()
}

fn post(svc: &RunningService, path: &str, body: Value) -> (u16, Value) {
    let mut resp = agent().post(&svc.url(path)).send_json(&body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_json().unwrap())
}

fn scripted_service(idle: Duration) -> RunningService {
    start(Arc::new(Scripted::new(&[("how do i feel", ambiguous_row())])), idle)
}

#[test]
fn classify_returns_full_distribution() {
    let svc = start(Arc::new(naive_bayes()), Duration::from_secs(60));
    let (status, body) = post(&svc, "/classify", json!({"text": "tell me a joke"}));
    assert_eq!(status, 200);
    let resp: ClassifyResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.label, "JOKE");
    assert_eq!(resp.probabilities.len(), 7);
    assert!((resp.probabilities.values().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(resp.attribution.is_none());
    svc.shutdown().unwrap();
}

#[test]
fn classify_explain_attaches_attribution() {
    let svc = start(Arc::new(naive_bayes()), Duration::from_secs(60));
    let (status, body) = post(&svc, "/classify?explain=1", json!({"text": "tell me a joke"}));
    assert_eq!(status, 200);
    let resp: ClassifyResponse = serde_json::from_value(body).unwrap();
    let a = resp.attribution.unwrap();
    assert_eq!(a.tokens, ["tell", "me", "a", "joke"]);
    assert_eq!(a.scores.len(), 4);
    assert_eq!(a.predicted, "JOKE");
}

#[test]
fn classify_rejects_empty_and_malformed_input() {
    let svc = start(Arc::new(naive_bayes()), Duration::from_secs(60));
    assert_eq!(post(&svc, "/classify", json!({"text": "  ?! "})).0, 400);
    assert_eq!(post(&svc, "/classify", json!({"words": "joke"})).0, 400);
}

#[test]
fn health_reports_model_hash_and_labels() {
    let model = naive_bayes();
    let hash = model.fingerprint().unwrap();
    let svc = start(Arc::new(model), Duration::from_secs(60));
    let mut resp = agent().get(&svc.url("/health")).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let h: HealthResponse = resp.body_mut().read_json().unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.model_hash, hash);
    assert_eq!(h.labels.len(), 7);
}

#[test]
fn chat_clarification_round_trip() {
    let svc = scripted_service(Duration::from_secs(60));
    let (status, body) = post(&svc, "/chat", json!({"text": "how do I feel?"}));
    assert_eq!(status, 200);
    let first: ChatResponse = serde_json::from_value(body).unwrap();
    let RoutingDecision::Clarify { candidates, question, .. } = &first.decision else {
        panic!("expected clarification, got {:?}", first.decision);
    };
    assert_eq!(candidates[0].label, "EEG-EMOTIONS");
    assert_eq!(candidates[1].label, "SENTIMENT-ANALYSIS");
    assert!(question.contains("EEG-EMOTIONS") && question.contains("SENTIMENT-ANALYSIS"));

    // New text while a clarification is pending conflicts.
    let (status, _) = post(&svc, "/chat", json!({"session": first.session, "text": "hello"}));
    assert_eq!(status, 409);

    let (status, body) = post(&svc, "/chat", json!({"session": first.session, "choice": "2"}));
    assert_eq!(status, 200);
    let second: ChatResponse = serde_json::from_value(body).unwrap();
    assert_eq!(second.session, first.session);
    assert_eq!(second.decision.label(), Some("SENTIMENT-ANALYSIS"));

    // Nothing pending any more.
    let (status, _) = post(&svc, "/chat", json!({"session": first.session, "choice": "first"}));
    assert_eq!(status, 409);
}

#[test]
fn chat_status_codes() {
    let svc = scripted_service(Duration::from_secs(60));
    assert_eq!(post(&svc, "/chat", json!({"session": "nope", "text": "hi"})).0, 404);
    assert_eq!(post(&svc, "/chat", json!({"text": "hi", "choice": "1"})).0, 400);
    assert_eq!(post(&svc, "/chat", json!({})).0, 400);
    assert_eq!(post(&svc, "/chat", json!({"text": "   "})).0, 400);
    assert_eq!(post(&svc, "/chat", json!({"choice": "third"})).0, 400);
    let (status, body) = post(&svc, "/chat", json!({"text": "hello there"}));
    assert_eq!(status, 200);
    assert_eq!(body["decision"]["kind"], "execute");
    assert_eq!(body["decision"]["label"], "CHAT");
}

#[test]
fn idle_sessions_expire() {
    let svc = scripted_service(Duration::from_millis(150));
    let (_, body) = post(&svc, "/chat", json!({"text": "hello"}));
    let id = body["session"].as_str().unwrap().to_string();
    assert_eq!(post(&svc, "/chat", json!({"session": id, "text": "again"})).0, 200);
    std::thread::sleep(Duration::from_millis(400));
    assert_eq!(post(&svc, "/chat", json!({"session": id, "text": "late"})).0, 404);
}

#[test]
fn taken_port_fails_at_start() {
    let svc = scripted_service(Duration::from_secs(60));
    let router = Router::with_stub_handlers(Arc::new(naive_bayes()), RouterConfig::default());
    let state = Arc::new(AppState::new(router, Duration::from_secs(1)).unwrap());
    assert!(RunningService::start(&svc.addr().to_string(), state).is_err());
}
