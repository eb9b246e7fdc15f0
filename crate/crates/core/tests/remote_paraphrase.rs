use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::post;
use axum::Json;
use serde_json::{json, Value};

use ciai::augment::{augment, AugmentError, ParaphraseBackend, ParaphraseProvider, ProviderError, ProviderKind, RemoteParaphraser};
use ciai::corpus::{Corpus, LabelRegistry, Provenance, TaskLabel, Utterance};

type Log = Arc<Mutex<Vec<Value>>>;

/// Serves `router` on an ephemeral port from a background runtime.
fn serve(router: axum::Router) -> SocketAddr {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap()
            .block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, router).await.unwrap();
            })
    });
    addr
}

/// Returns the input, two duplicates and numbered variants up to the
/// requested maximum; records each request body.
fn echo_server(log: Log) -> SocketAddr {
    serve(axum::Router::new().route(
        "/paraphrase",
        post(move |Json(body): Json<Value>| {
            let log = log.clone();
            async move {
                log.lock().unwrap().push(body.clone());
                let text = body["text"].as_str().unwrap().to_string();
                let max = body["max_candidates"].as_u64().unwrap() as usize;
                let mut out = vec![text.to_uppercase(), "same thing".to_string(), "Same   thing".to_string()];
                out.extend((0..max).map(|i| format!("{text} variant {i}")));
                Json(json!({ "paraphrases": out }))
            }
        }),
    ))
}

fn provider(addr: SocketAddr, cap: usize) -> ParaphraseProvider {
    let remote = RemoteParaphraser::new(&format!("http://{addr}/"), Duration::from_secs(5));
    ParaphraseProvider::new(Box::new(remote), NonZeroUsize::new(cap).unwrap(), 42)
}

#[test]
fn request_carries_text_cap_and_seed() {
    let log = Log::default();
    let addr = echo_server(log.clone());
    let remote = RemoteParaphraser::new(&format!("http://{addr}"), Duration::from_secs(5));
    assert_eq!(remote.kind(), ProviderKind::Remote);
    let raw = remote.candidates("tell me a joke", 3, 9).unwrap();
    assert_eq!(raw.len(), 6);
    assert_eq!(log.lock().unwrap()[0], json!({"text": "tell me a joke", "max_candidates": 3, "seed": 9}));
}

#[test]
fn provider_filters_input_duplicates_and_caps() {
    let addr = echo_server(Log::default());
    let out = provider(addr, 4).paraphrase("tell me a joke").unwrap();
    assert_eq!(
        out,
        ["same thing", "tell me a joke variant 0", "tell me a joke variant 1", "tell me a joke variant 2"]
    );
}

#[test]
fn http_errors_and_bad_bodies_are_reported() {
    let addr = serve(
        axum::Router::new()
            .route("/paraphrase", post(|| async { (StatusCode::SERVICE_UNAVAILABLE, "busy") }))
            .route("/bad/paraphrase", post(|| async { Json(json!({"candidates": []})) })),
    );
    let down = RemoteParaphraser::new(&format!("http://{addr}"), Duration::from_secs(5));
    assert!(matches!(down.candidates("hi", 2, 0), Err(ProviderError::Status(503))));
    let bad = RemoteParaphraser::new(&format!("http://{addr}/bad"), Duration::from_secs(5));
    assert!(matches!(bad.candidates("hi", 2, 0), Err(ProviderError::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_reported() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let remote = RemoteParaphraser::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    let err = remote.candidates("hi", 2, 0).unwrap_err();
    assert!(matches!(err, ProviderError::Unreachable(_)));
    assert!(err.is_retryable());
}

#[test]
fn augment_end_to_end_through_remote_provider() {
    let addr = echo_server(Log::default());
    let registry = LabelRegistry::from_names(&["CHAT", "JOKE"]).unwrap();
    let chat = TaskLabel::new("CHAT").unwrap();
    let joke = TaskLabel::new("JOKE").unwrap();
    let train = Corpus::new(
        vec![
            Utterance::human("c1", "hello there", chat.clone()),
            Utterance::human("c2", "good morning", chat),
            Utterance::human("j1", "tell me a joke", joke),
        ],
        registry,
    )
    .unwrap();
    let out = augment(&train, &provider(addr, 3)).unwrap();
    let counts = out.corpus.class_counts();
    assert_eq!(counts[0], counts[1]);
    assert_eq!(out.balance_target, counts[0]);
    assert_eq!(out.corpus.iter().filter(|u| u.provenance == Provenance::Human).count(), 3);
    for u in out.corpus.iter().filter(|u| u.provenance == Provenance::Synthetic) {
        assert!(out.source_map.contains_key(&u.id));
    }
}

#[test]
fn provider_failure_names_the_source() {
    let addr = serve(axum::Router::new().route("/paraphrase", post(|| async { StatusCode::INTERNAL_SERVER_ERROR })));
    let train = Corpus::new(
        vec![Utterance::human("only", "hello", TaskLabel::new("CHAT").unwrap())],
        LabelRegistry::from_names(&["CHAT"]).unwrap(),
    )
    .unwrap();
    match augment(&train, &provider(addr, 2)) {
        Err(AugmentError::Provider { source_id, error: ProviderError::Status(500) }) => assert_eq!(source_id, "only"),
        other => panic!("unexpected {other:?}"),
    }
}
