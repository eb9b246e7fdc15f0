//! HTTP interface: `POST /classify`, `POST /chat`, `GET /health`.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use serde::{Deserialize, Serialize};

use super::{ChatSession, Choice, Router, RouterError, RoutingDecision};
use crate::classifier::ClassifierError;
use crate::eval::{occlusion_attribution, Attribution, EvalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub addr: String,
    pub idle_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            idle_timeout_secs: 15 * 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub label: String,
    pub probabilities: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<Attribution>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub session: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub choice: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub session: String,
    pub decision: RoutingDecision,
    pub reply: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_hash: String,
    pub labels: Vec<String>,
}

struct Slot {
    session: ChatSession,
    last_active: Instant,
}

/// Shared service state: one immutable router, sessions behind per-session locks.
pub struct AppState {
    router: Router,
    model_hash: String,
    idle_timeout: Duration,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
}

impl AppState {
    pub fn new(router: Router, idle_timeout: Duration) -> Result<Self, ClassifierError> {
        let model_hash = router.classifier().fingerprint()?;
        Ok(Self {
            router,
            model_hash,
            idle_timeout,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    fn sweep(&self, now: Instant) {
        let mut sessions = self.sessions.lock().expect("session map lock");
        sessions.retain(|_, slot| {
            slot.try_lock()
                .map_or(true, |s| now.duration_since(s.last_active) < self.idle_timeout)
        });
    }

    fn lookup(&self, id: &str) -> Option<Arc<Mutex<Slot>>> {
        self.sweep(Instant::now());
        self.sessions.lock().expect("session map lock").get(id).cloned()
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<RouterError> for ApiError {
    fn from(e: RouterError) -> Self {
        let status = match e {
            RouterError::EmptyText | RouterError::InvalidChoice(_) => StatusCode::BAD_REQUEST,
            RouterError::NoPending | RouterError::PendingClarification => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

#[derive(Debug, Deserialize)]
struct ClassifyQuery {
    explain: Option<String>,
}

async fn classify(
    State(state): State<Arc<AppState>>,
    Query(query): Query<ClassifyQuery>,
    body: Result<Json<ClassifyRequest>, JsonRejection>,
) -> Result<Json<ClassifyResponse>, ApiError> {
    let Json(req) = body?;
    let decision = super::route_row(
        state.router.classifier().labels(),
        &state.router.classifier().predict_proba(&req.text).map_err(RouterError::from)?,
        state.router.config(),
    );
    let probabilities = decision.probabilities().clone();
    let label = probabilities
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.clone())
        .unwrap_or_default();
    let explain = matches!(query.explain.as_deref(), Some("1" | "true"));
    let attribution = if explain {
        Some(occlusion_attribution(state.router.classifier(), &req.text).map_err(|e| match e {
            EvalError::Classifier(c) => ApiError::from(RouterError::from(c)),
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?)
    } else {
        None
    };
    Ok(Json(ClassifyResponse {
        label,
        probabilities,
        attribution,
    }))
}

async fn chat(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let Json(req) = body?;
    let choice = req.choice.as_deref().map(str::parse::<Choice>).transpose()?;
    match (&req.text, choice) {
        (Some(_), Some(_)) => return Err(ApiError(StatusCode::BAD_REQUEST, "send either text or choice, not both".into())),
        (None, None) => return Err(ApiError(StatusCode::BAD_REQUEST, "text or choice is required".into())),
        _ => {}
    }
    let run = |session: &mut ChatSession| match (&req.text, choice) {
        (Some(text), _) => session.submit(&state.router, text),
        (None, Some(c)) => session.resolve_clarification(&state.router, c),
        (None, None) => unreachable!(),
    };
    let (id, turn) = match &req.session {
        Some(id) => {
            let slot = state
                .lookup(id)
                .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown or expired session {id}")))?;
            let mut slot = slot.lock().expect("session lock");
            slot.last_active = Instant::now();
            (id.clone(), run(&mut slot.session)?)
        }
        None => {
            let id = uuid::Uuid::new_v4().to_string();
            let mut session = ChatSession::new(id.clone());
            let turn = run(&mut session)?;
            state.sweep(Instant::now());
            let slot = Slot {
                session,
                last_active: Instant::now(),
            };
            state
                .sessions
                .lock()
                .expect("session map lock")
                .insert(id.clone(), Arc::new(Mutex::new(slot)));
            (id, turn)
        }
    };
    Ok(Json(ChatResponse {
        session: id,
        decision: turn.decision,
        reply: turn.reply,
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        model_hash: state.model_hash.clone(),
        labels: state.router.classifier().labels().labels().iter().map(|l| l.to_string()).collect(),
    })
}

pub fn app(state: Arc<AppState>) -> axum::Router {
    axum::Router::new()
        .route("/classify", post(classify))
        .route("/chat", post(chat))
        .route("/health", get(health))
        .with_state(state)
}

/// A service running on its own runtime thread; dropped or [`shutdown`]
/// handles stop it.
///
/// [`shutdown`]: RunningService::shutdown
pub struct RunningService {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl RunningService {
    /// Binds synchronously so a taken port fails here, then serves in the
    /// background.
    pub fn start(addr: &str, state: Arc<AppState>) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener)?;
                axum::serve(listener, app(state))
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
            })
        });
        Ok(Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Blocks until the service exits.
    pub fn wait(mut self) -> std::io::Result<()> {
        self.thread.take().map_or(Ok(()), |t| t.join().expect("service thread panicked"))
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop.take().map(|s| s.send(()));
        self.thread.take().map_or(Ok(()), |t| t.join().expect("service thread panicked"))
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
