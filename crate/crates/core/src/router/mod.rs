//! Task routing: execute the predicted task, or ask a two-way clarification
//! question when two candidates dominate without a clear winner.

mod service;
mod terminal;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, TextClassifier};
use crate::corpus::{LabelRegistry, TaskLabel};

pub use service::{app, AppState, ChatRequest, ChatResponse, ClassifyRequest, ClassifyResponse, HealthResponse, RunningService, ServiceConfig};
pub use terminal::run_terminal;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("text contains no tokens")]
    EmptyText,
    #[error("no clarification is pending")]
    NoPending,
    #[error("a clarification is already pending")]
    PendingClarification,
    #[error("choice must be \"first\" or \"second\", got {0:?}")]
    InvalidChoice(String),
    #[error("handler registry does not match the classifier labels")]
    RegistryMismatch,
    #[error("duplicate or missing handler for {0}")]
    Handler(String),
    #[error(transparent)]
    Classifier(ClassifierError),
}

impl From<ClassifierError> for RouterError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::EmptyInput => RouterError::EmptyText,
            other => RouterError::Classifier(other),
        }
    }
}

pub type Result<T, E = RouterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterConfig {
    /// Clarify only when `p₁ − p₂` is below this.
    pub gap_threshold: f64,
    /// ...and `p₁ + p₂` exceeds this.
    pub min_confidence: f64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            gap_threshold: 0.4,
            min_confidence: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RoutingDecision {
    Execute {
        label: String,
        probability: f64,
        probabilities: BTreeMap<String, f64>,
    },
    Clarify {
        candidates: [Candidate; 2],
        question: String,
        probabilities: BTreeMap<String, f64>,
    },
}

impl RoutingDecision {
    pub fn is_clarify(&self) -> bool {
        matches!(self, RoutingDecision::Clarify { .. })
    }

    pub fn probabilities(&self) -> &BTreeMap<String, f64> {
        match self {
            RoutingDecision::Execute { probabilities, .. } | RoutingDecision::Clarify { probabilities, .. } => probabilities,
        }
    }

    /// The executed label, if this is an execute decision.
    pub fn label(&self) -> Option<&str> {
        match self {
            RoutingDecision::Execute { label, .. } => Some(label),
            RoutingDecision::Clarify { .. } => None,
        }
    }
}

/// Top two indices by probability, ties resolved toward the lower index.
pub fn top_two(row: &[f64]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    (order[0], order.get(1).copied().unwrap_or(order[0]))
}

pub fn clarification_question(first: &str, second: &str) -> String {
    format!("Did you mean {first} or {second}?")
}

/// The decision rule on a probability row (registry order). Pure.
pub fn route_row(labels: &LabelRegistry, row: &[f64], config: &RouterConfig) -> RoutingDecision {
    let probabilities: BTreeMap<String, f64> = labels
        .labels()
        .iter()
        .zip(row)
        .map(|(l, &p)| (l.to_string(), p))
        .collect();
    let (a, b) = top_two(row);
    let (p1, p2) = (row[a], row[b]);
    if a != b && p1 - p2 < config.gap_threshold && p1 + p2 > config.min_confidence {
        let (la, lb) = (labels.label(a).to_string(), labels.label(b).to_string());
        RoutingDecision::Clarify {
            question: clarification_question(&la, &lb),
            candidates: [
                Candidate {
                    label: la,
                    probability: p1,
                },
                Candidate {
                    label: lb,
                    probability: p2,
                },
            ],
            probabilities,
        }
    } else {
        RoutingDecision::Execute {
            label: labels.label(a).to_string(),
            probability: p1,
            probabilities,
        }
    }
}

pub fn route(classifier: &dyn TextClassifier, text: &str, config: &RouterConfig) -> Result<RoutingDecision> {
    let row = classifier.predict_proba(text)?;
    Ok(route_row(classifier.labels(), &row, config))
}

/// Acknowledgment stub for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskHandler {
    pub label: TaskLabel,
    pub description: String,
}

impl TaskHandler {
    pub fn execute(&self, text: &str) -> String {
        format!("[{}] launching {} for {text:?}", self.label, self.description)
    }
}

fn standard_description(label: &str) -> String {
    match label {
        "CHAT" => "conversational chat",
        "EEG-EMOTIONS" => "EEG emotion classification",
        "EEG-MENTAL-STATE" => "EEG mental state classification",
        "JOKE" => "joke generation",
        "SCENE-CLASSIFICATION" => "scene recognition",
        "SENTIMENT-ANALYSIS" => "sentiment analysis",
        "SIGN-LANGUAGE" => "sign language recognition",
        other => return format!("{} task", other.to_lowercase()),
    }
    .to_string()
}

/// Exactly one handler per registered label.
#[derive(Debug, Clone, PartialEq)]
pub struct HandlerRegistry {
    labels: LabelRegistry,
    handlers: Vec<TaskHandler>,
}

impl HandlerRegistry {
    pub fn new(labels: &LabelRegistry, handlers: Vec<TaskHandler>) -> Result<Self> {
        let mut ordered = Vec::with_capacity(labels.len());
        for label in labels.labels() {
            let mut matching = handlers.iter().filter(|h| &h.label == label);
            match (matching.next(), matching.next()) {
                (Some(h), None) => ordered.push(h.clone()),
                _ => return Err(RouterError::Handler(label.to_string())),
            }
        }
        if handlers.len() != labels.len() {
            let extra = handlers.iter().find(|h| !labels.contains(&h.label)).map(|h| h.label.to_string());
            return Err(RouterError::Handler(extra.unwrap_or_default()));
        }
        Ok(Self {
            labels: labels.clone(),
            handlers: ordered,
        })
    }

    /// Stub handlers with built-in descriptions for every label.
    pub fn stubs(labels: &LabelRegistry) -> Self {
        let handlers = labels
            .labels()
            .iter()
            .map(|l| TaskHandler {
                label: l.clone(),
                description: standard_description(l.as_str()),
            })
            .collect();
        Self {
            labels: labels.clone(),
            handlers,
        }
    }

    pub fn labels(&self) -> &LabelRegistry {
        &self.labels
    }

    pub fn get(&self, label: &str) -> Option<&TaskHandler> {
        self.handlers.iter().find(|h| h.label.as_str() == label)
    }
}

/// A classifier, its handlers and the clarification thresholds.
#[derive(Clone)]
pub struct Router {
    classifier: Arc<dyn TextClassifier>,
    handlers: HandlerRegistry,
    config: RouterConfig,
}

impl fmt::Debug for Router {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Router").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Router {
    pub fn new(classifier: Arc<dyn TextClassifier>, handlers: HandlerRegistry, config: RouterConfig) -> Result<Self> {
        if classifier.labels() != handlers.labels() {
            return Err(RouterError::RegistryMismatch);
        }
        Ok(Self {
            classifier,
            handlers,
            config,
        })
    }

    pub fn with_stub_handlers(classifier: Arc<dyn TextClassifier>, config: RouterConfig) -> Self {
        let handlers = HandlerRegistry::stubs(classifier.labels());
        Self {
            classifier,
            handlers,
            config,
        }
    }

    pub fn classifier(&self) -> &dyn TextClassifier {
        self.classifier.as_ref()
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    pub fn route(&self, text: &str) -> Result<RoutingDecision> {
        route(self.classifier.as_ref(), text, &self.config)
    }

    fn acknowledge(&self, label: &str, text: &str) -> String {
        self.handlers.get(label).map_or_else(String::new, |h| h.execute(text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

impl FromStr for Choice {
    type Err = RouterError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "first" | "1" => Ok(Choice::First),
            "second" | "2" => Ok(Choice::Second),
            _ => Err(RouterError::InvalidChoice(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub input: String,
    pub decision: RoutingDecision,
    /// The execute decision that resolved a clarification.
    pub resolution: Option<RoutingDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingClarification {
    pub input: String,
    pub decision: RoutingDecision,
}

/// Reply to one chat turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub decision: RoutingDecision,
    pub reply: String,
}

/// Conversation state. A turn enters the transcript once it has executed,
/// so a clarification cycle appends exactly one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub id: String,
    pending: Option<PendingClarification>,
    transcript: Vec<TranscriptEntry>,
}

impl ChatSession {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            pending: None,
            transcript: Vec::new(),
        }
    }

    pub fn pending(&self) -> Option<&PendingClarification> {
        self.pending.as_ref()
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn submit(&mut self, router: &Router, text: &str) -> Result<ChatTurn> {
        if self.pending.is_some() {
            return Err(RouterError::PendingClarification);
        }
        let decision = router.route(text)?;
        let reply = match &decision {
            RoutingDecision::Execute { label, .. } => {
                self.transcript.push(TranscriptEntry {
                    input: text.to_string(),
                    decision: decision.clone(),
                    resolution: None,
                });
                router.acknowledge(label, text)
            }
            RoutingDecision::Clarify { question, .. } => {
                self.pending = Some(PendingClarification {
                    input: text.to_string(),
                    decision: decision.clone(),
                });
                question.clone()
            }
        };
        Ok(ChatTurn { decision, reply })
    }

    pub fn resolve_clarification(&mut self, router: &Router, choice: Choice) -> Result<ChatTurn> {
        let pending = self.pending.take().ok_or(RouterError::NoPending)?;
        let RoutingDecision::Clarify {
            candidates,
            probabilities,
            ..
        } = &pending.decision
        else {
            unreachable!("only clarify decisions are held pending")
        };
        let chosen = &candidates[match choice {
            Choice::First => 0,
            Choice::Second => 1,
        }];
        let decision = RoutingDecision::Execute {
            label: chosen.label.clone(),
            probability: chosen.probability,
            probabilities: probabilities.clone(),
        };
        let reply = router.acknowledge(&chosen.label, &pending.input);
        self.transcript.push(TranscriptEntry {
            input: pending.input,
            decision: pending.decision,
            resolution: Some(decision.clone()),
        });
        Ok(ChatTurn { decision, reply })
    }
}
