//! Backend-agnostic task scoring with a bounded schema-repair loop.
//!
//! A [`ScoreBackend`] turns a chat-style request into a raw response string;
//! everything else here is pure. The first request carries the category
//! definitions and the output contract; when a response violates the schema,
//! the request is re-sent with the previous response and a corrective message
//! appended, up to the attempt budget. Transport retries are the backend's
//! own, separately bounded concern so network flakiness never consumes repair
//! attempts.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::ingest::TaskKey;
use crate::schema::{
    render_violations, validate_response, CategoryCode, ScoreMeta, TaskScore, ValidationViolation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One backend request: the running conversation plus decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

/// The prompt for one task. `user_text` is the task statement verbatim and
/// nothing else: occupation titles and SOC codes never reach the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPayload {
    pub system_text: String,
    pub user_text: String,
    pub decoding: Decoding,
}

/// Scoring-time knobs. `max_attempts` bounds schema repairs; the backoff and
/// timeout fields configure the transport layer inside remote backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerPolicy {
    pub max_attempts: u32,
    pub request_timeout_secs: u64,
    pub max_in_flight: u32,
    pub backoff_base_ms: u64,
    pub backoff_multiplier: f64,
    pub max_output_tokens: u32,
}

impl Default for ScorerPolicy {
    fn default() -> Self {
        ScorerPolicy {
            max_attempts: 3,
            request_timeout_secs: 60,
            max_in_flight: 4,
            backoff_base_ms: 500,
            backoff_multiplier: 2.0,
            max_output_tokens: 512,
        }
    }
}

impl ScorerPolicy {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.max_attempts < 1 {
            return Err(ScoreError::InvalidPolicy {
                message: "max_attempts must be at least 1".to_owned(),
            });
        }
        if self.max_in_flight < 1 {
            return Err(ScoreError::InvalidPolicy {
                message: "max_in_flight must be at least 1".to_owned(),
            });
        }
        Ok(())
    }
}

/// Terminal transport failure: the backend already spent its own retry
/// budget. Distinct from schema failures, which are values, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportError {
    pub message: String,
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreError {
    EmptyTask,
    InvalidPolicy { message: String },
    Transport(TransportError),
}

impl fmt::Display for ScoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreError::EmptyTask => f.write_str("task text is empty"),
            ScoreError::InvalidPolicy { message } => write!(f, "invalid policy: {message}"),
            ScoreError::Transport(e) => write!(f, "transport failure: {e}"),
        }
    }
}

/// A task whose responses never satisfied the schema within the attempt
/// budget. Recorded, surfaced, and excluded from aggregation downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringFailure {
    pub task_key: TaskKey,
    pub attempts: u32,
    pub last_violations: Vec<ValidationViolation>,
    pub raw_last_response: String,
}

/// Outcome of scoring one task: either an accepted record or a recorded
/// failure. Both are ordinary values.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreOutcome {
    Scored(TaskScore),
    Failed(ScoringFailure),
}

/// Every unique task key resolved to exactly one of scores or failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCorpus {
    pub scores: BTreeMap<TaskKey, TaskScore>,
    pub failures: BTreeMap<TaskKey, ScoringFailure>,
    pub backend_id: String,
    pub policy: ScorerPolicy,
}

impl ScoredCorpus {
    pub fn new(backend_id: &str, policy: &ScorerPolicy) -> Self {
        ScoredCorpus {
            scores: BTreeMap::new(),
            failures: BTreeMap::new(),
            backend_id: backend_id.to_owned(),
            policy: policy.clone(),
        }
    }
}

/// Anything that can answer a chat-style scoring request.
pub trait ScoreBackend: Send + Sync {
    /// Stable identifier recorded in score metadata and provenance.
    fn id(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

const SYSTEM_TEXT: &str = concat!(
    "You are a precise classifier of occupational task statements. For the task \
statement given by the user, identify the single dominant source of transaction \
cost incurred when the task is carried out, and rate the coordination burden \
involved. Consider the task as it would typically be performed once.\n\
\n\
The four transaction-cost categories are:\n\
- SEARCH_INFO: effort spent locating, gathering, and making usable the \
information needed to do the task.\n\
- BARGAIN_DECIDE: effort spent reaching decisions, agreements, or commitments \
with or about other parties.\n\
- MONITOR_ENFORCE: effort spent documenting, checking, auditing, or otherwise \
assuring that obligations and standards are met.\n\
- ADAPT_COORDINATE: effort spent re-planning, handing over, synchronising, or \
handling exceptions when circumstances change.\n\
\n\
Rate the overall transaction-cost intensity of performing the task once on an \
integer scale from 0 (no meaningful coordination burden) to 5 (coordination \
dominates the task). Rate each cost driver from 0 to 3: uncertainty about \
inputs or outcomes; measurability, where a HIGHER score means the work is \
HARDER to measure or verify; asset_specificity of the relationships, systems, \
or knowledge involved; interdependence with other actors; and opportunism, the \
exposure to misaligned incentives. Optionally add short lowercase tags naming \
the most salient frictions.\n\
\n\
Respond with exactly one JSON object and nothing else, matching:\n",
    r#"{"tc_category": "SEARCH_INFO" | "BARGAIN_DECIDE" | "MONITOR_ENFORCE" | "ADAPT_COORDINATE", "tc_intensity": <integer 0-5>, "drivers": {"uncertainty": <integer 0-3>, "measurability": <integer 0-3>, "asset_specificity": <integer 0-3>, "interdependence": <integer 0-3>, "opportunism": <integer 0-3>}, "tags": [<lowercase string, at most 40 chars, no duplicates>, ...]}"#
);

/// Build the scoring prompt for one task statement. The user turn is the task
/// text verbatim; blinding applies to metadata, not task content.
pub fn build_prompt(task_text: &str) -> Result<PromptPayload, ScoreError> {
    if task_text.trim().is_empty() {
        return Err(ScoreError::EmptyTask);
    }
    Ok(PromptPayload {
        system_text: SYSTEM_TEXT.to_owned(),
        user_text: task_text.to_owned(),
        decoding: Decoding {
            temperature: 0.0,
            max_output_tokens: 512,
        },
    })
}

/// Score one task text through the repair loop.
///
/// Attempt 1 sends the plain prompt. Each rejection appends the raw response
/// and the rendered violations as a corrective turn and retries, up to
/// `policy.max_attempts` requests in total. The first valid candidate wins;
/// exhaustion returns a [`ScoringFailure`] carrying the final violations.
pub fn score_task(
    task_text: &str,
    backend: &dyn ScoreBackend,
    policy: &ScorerPolicy,
    scored_at: u64,
) -> Result<ScoreOutcome, ScoreError> {
    policy.validate()?;
    let prompt = build_prompt(task_text)?;
    let task_key = TaskKey::of_text(task_text);

    let mut messages = alloc::vec![
        ChatMessage {
            role: Role::System,
            content: prompt.system_text,
        },
        ChatMessage {
            role: Role::User,
            content: prompt.user_text,
        },
    ];

    for attempt in 1..=policy.max_attempts {
        let request = ChatRequest {
            messages: messages.clone(),
            temperature: prompt.decoding.temperature,
            max_output_tokens: policy.max_output_tokens,
        };
        let raw = backend.complete(&request).map_err(ScoreError::Transport)?;
        match validate_response(&raw) {
            Ok(payload) => {
                let meta = ScoreMeta {
                    attempts: attempt,
                    repaired: attempt > 1,
                    model_id: backend.id().to_owned(),
                    scored_at,
                };
                return Ok(ScoreOutcome::Scored(TaskScore::from_payload(
                    task_key, payload, meta,
                )));
            }
            Err(violations) => {
                if attempt == policy.max_attempts {
                    return Ok(ScoreOutcome::Failed(ScoringFailure {
                        task_key,
                        attempts: attempt,
                        last_violations: violations,
                        raw_last_response: raw,
                    }));
                }
                messages.push(ChatMessage {
                    role: Role::Assistant,
                    content: raw,
                });
                messages.push(ChatMessage {
                    role: Role::User,
                    content: render_violations(&violations),
                });
            }
        }
    }
    unreachable!("loop returns on every attempt");
}

/// Deterministic keyword-rule backend: derives a valid scoring record from
/// the task text alone, so identical texts always get identical records. Used
/// for offline runs and tests.
#[derive(Debug, Default)]
pub struct RuleMock;

// Keyword lists checked in order; first hit decides the category.
const MONITOR_WORDS: &[&str] = &[
    "record",
    "document",
    "monitor",
    "audit",
    "maintain",
    "inspect",
    "verify",
    "chart",
    "compliance",
    "log",
];
const ADAPT_WORDS: &[&str] = &[
    "schedule",
    "coordinate",
    "refer",
    "handover",
    "adjust",
    "respond",
    "adapt",
    "arrange",
    "triage",
    "transfer",
];
const BARGAIN_WORDS: &[&str] = &[
    "negotiate",
    "authorize",
    "approve",
    "decide",
    "prescribe",
    "recommend",
    "plan",
    "order",
    "select",
    "consent",
];

impl RuleMock {
    fn category_for(text: &str) -> CategoryCode {
        let lower = text.to_lowercase();
        let hit = |words: &[&str]| words.iter().any(|w| lower.contains(w));
        if hit(MONITOR_WORDS) {
            CategoryCode::MonitorEnforce
        } else if hit(ADAPT_WORDS) {
            CategoryCode::AdaptCoordinate
        } else if hit(BARGAIN_WORDS) {
            CategoryCode::BargainDecide
        } else {
            CategoryCode::SearchInfo
        }
    }

    /// The record the rule backend would emit for a task text.
    pub fn record_for(task_text: &str) -> String {
        let category = Self::category_for(task_text);
        let key = TaskKey::of_text(task_text);
        let bytes = key.as_str().as_bytes();
        // Hash bytes drive the ordinal scores so fixtures get varied but
        // reproducible values.
        let nib = |i: usize, m: u8| bytes[i] % m;
        let intensity = bytes[0] % 6;
        let tag = match category {
            CategoryCode::SearchInfo => "information-search",
            CategoryCode::BargainDecide => "decision-coordination",
            CategoryCode::MonitorEnforce => "monitoring",
            CategoryCode::AdaptCoordinate => "adaptation",
        };
        format!(
            r#"{{"tc_category": "{}", "tc_intensity": {}, "drivers": {{"uncertainty": {}, "measurability": {}, "asset_specificity": {}, "interdependence": {}, "opportunism": {}}}, "tags": ["{}"]}}"#,
            category.as_str(),
            intensity,
            nib(1, 4),
            nib(2, 4),
            nib(3, 4),
            nib(4, 4),
            nib(5, 4),
            tag,
        )
    }

    fn task_text(request: &ChatRequest) -> &str {
        // The first user turn is the task statement; later user turns are
        // repair messages.
        request
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

impl ScoreBackend for RuleMock {
    fn id(&self) -> &str {
        "mock-rule-v1"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        Ok(Self::record_for(Self::task_text(request)))
    }
}

/// Scripted backend: returns a fixed sequence of responses, one per call, in
/// order. Asking for more responses than scripted is an error.
#[derive(Debug)]
pub struct ScriptMock {
    responses: Vec<String>,
    cursor: AtomicUsize,
}

impl ScriptMock {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptMock {
            responses: responses.into_iter().map(Into::into).collect(),
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn calls_made(&self) -> usize {
        self.cursor.load(Ordering::SeqCst)
    }
}

impl ScoreBackend for ScriptMock {
    fn id(&self) -> &str {
        "mock-script-v1"
    }

    fn complete(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        let index = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.responses
            .get(index)
            .cloned()
            .ok_or_else(|| TransportError {
                message: format!(
                    "mock script exhausted: {} responses scripted, call {} requested",
                    self.responses.len(),
                    index + 1
                ),
            })
    }
}
