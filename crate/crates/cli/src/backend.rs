//! Scoring backends: the deterministic rule mock from the core crate, and a
//! remote chat-completion endpoint speaking the Azure OpenAI wire shape.
//!
//! Transport retries live here, separate from the schema repair budget: each
//! request gets up to [`TRANSPORT_RETRIES`] re-sends with exponential backoff
//! before the failure is surfaced as terminal.

use std::time::Duration;

use serde_json::json;

use tcmap_core::scorer::{ChatRequest, RuleMock, ScoreBackend, ScorerPolicy, TransportError};

use crate::config::{BackendKind, PipelineConfig, API_KEY_ENV};
use crate::error::{PipelineError, Result};

/// Re-sends per request after the first try, on network errors, timeouts,
/// HTTP 429, and HTTP 5xx.
pub const TRANSPORT_RETRIES: u32 = 3;

pub enum Backend {
    Mock(RuleMock),
    Remote(HttpBackend),
}

impl Backend {
    pub fn as_score_backend(&self) -> &dyn ScoreBackend {
        match self {
            Backend::Mock(b) => b,
            Backend::Remote(b) => b,
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self, Backend::Mock(_))
    }
}

/// Build the backend selected by the configuration. The credential is read
/// from the environment here and nowhere else.
pub fn build_backend(config: &PipelineConfig) -> Result<Backend> {
    match config.backend {
        BackendKind::Mock => Ok(Backend::Mock(RuleMock)),
        BackendKind::Remote => {
            let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
                PipelineError::config(format!(
                    "backend=remote requires the credential in the {API_KEY_ENV} environment variable"
                ))
            })?;
            let endpoint = config
                .endpoint
                .clone()
                .ok_or_else(|| PipelineError::config("backend=remote requires endpoint"))?;
            let deployment = config
                .deployment
                .clone()
                .ok_or_else(|| PipelineError::config("backend=remote requires deployment"))?;
            let api_version = config
                .api_version
                .clone()
                .ok_or_else(|| PipelineError::config("backend=remote requires api_version"))?;
            Ok(Backend::Remote(HttpBackend::new(
                endpoint,
                deployment,
                api_version,
                api_key,
                &config.policy,
            )?))
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
    model_id: String,
    backoff_base_ms: u64,
    backoff_multiplier: f64,
    retries_made: std::sync::atomic::AtomicU64,
}

impl HttpBackend {
    pub fn new(
        endpoint: String,
        deployment: String,
        api_version: String,
        api_key: String,
        policy: &ScorerPolicy,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(policy.request_timeout_secs))
            .build()
            .map_err(|e| PipelineError::config(format!("cannot build HTTP client: {e}")))?;
        let base = endpoint.trim_end_matches('/');
        Ok(HttpBackend {
            client,
            url: format!(
                "{base}/openai/deployments/{deployment}/chat/completions?api-version={api_version}"
            ),
            api_key,
            model_id: deployment,
            backoff_base_ms: policy.backoff_base_ms,
            backoff_multiplier: policy.backoff_multiplier,
            retries_made: std::sync::atomic::AtomicU64::new(0),
        })
    }

    /// Total transport re-sends across the backend's lifetime.
    pub fn retries_made(&self) -> u64 {
        self.retries_made.load(std::sync::atomic::Ordering::SeqCst)
    }

    /// The request body for one chat completion, in the shape the endpoint
    /// expects.
    pub fn request_body(request: &ChatRequest) -> serde_json::Value {
        json!({
            "messages": request
                .messages
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    fn extract_content(body: &serde_json::Value) -> Option<String> {
        body.get("choices")?
            .get(0)?
            .get("message")?
            .get("content")?
            .as_str()
            .map(str::to_string)
    }

    fn send_once(&self, body: &serde_json::Value) -> std::result::Result<String, (bool, String)> {
        // Err carries (retryable, message).
        let response = self
            .client
            .post(&self.url)
            .header("api-key", &self.api_key)
            .json(body)
            .send()
            .map_err(|e| (true, format!("request failed: {e}")))?;
        let status = response.status();
        if status.is_success() {
            let value: serde_json::Value = response
                .json()
                .map_err(|e| (false, format!("response body is not JSON: {e}")))?;
            Self::extract_content(&value).ok_or_else(|| {
                (
                    false,
                    "response carries no choices[0].message.content".to_string(),
                )
            })
        } else {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            Err((retryable, format!("endpoint returned HTTP {status}")))
        }
    }
}

impl ScoreBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, TransportError> {
        let body = Self::request_body(request);
        let mut delay_ms = self.backoff_base_ms;
        let mut last_message = String::new();
        for attempt in 0..=TRANSPORT_RETRIES {
            match self.send_once(&body) {
                Ok(content) => return Ok(content),
                Err((retryable, message)) => {
                    last_message = message;
                    if !retryable || attempt == TRANSPORT_RETRIES {
                        break;
                    }
                    self.retries_made
                        .fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(delay_ms));
                    delay_ms = (delay_ms as f64 * self.backoff_multiplier) as u64;
                }
            }
        }
        Err(TransportError {
            message: format!(
                "transport exhausted after {} tries: {last_message}",
                TRANSPORT_RETRIES + 1
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use tcmap_core::scorer::{ChatMessage, Role};

    fn request() -> ChatRequest {
        ChatRequest {
            messages: vec![
                ChatMessage {
                    role: Role::System,
                    content: "system".into(),
                },
                ChatMessage {
                    role: Role::User,
                    content: "Assess the patient.".into(),
                },
            ],
            temperature: 0.0,
            max_output_tokens: 64,
        }
    }

    #[test]
    fn request_body_has_wire_shape() {
        let body = HttpBackend::request_body(&request());
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "Assess the patient.");
    }

    fn policy_with_fast_backoff() -> ScorerPolicy {
        ScorerPolicy {
            backoff_base_ms: 1,
            request_timeout_secs: 5,
            ..ScorerPolicy::default()
        }
    }

    /// Serve canned HTTP responses on a local listener, one per connection.
    fn serve(responses: Vec<String>) -> std::io::Result<(String, std::thread::JoinHandle<()>)> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let handle = std::thread::spawn(move || {
            for response in responses {
                let (mut stream, _) = listener.accept().expect("accept");
                let mut buffer = [0u8; 8192];
                // Read the request head; the bodies here are small enough to
                // arrive in one read on loopback.
                let _ = stream.read(&mut buffer);
                stream.write_all(response.as_bytes()).expect("write");
            }
        });
        Ok((format!("http://{addr}"), handle))
    }

    fn http_response(status: &str, body: &str) -> String {
        format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    #[test]
    fn remote_backend_round_trip_and_retry() {
        let ok_body = serde_json::json!({
            "choices": [{"message": {"content": "{\"score\": 1}"}}]
        })
        .to_string();
        let Ok((endpoint, server)) = serve(vec![
            http_response("500 Internal Server Error", "{}"),
            http_response("200 OK", &ok_body),
        ]) else {
            eprintln!("skipping: cannot bind a loopback listener in this environment");
            return;
        };
        let backend = HttpBackend::new(
            endpoint,
            "test-deployment".into(),
            "2024-12-01-preview".into(),
            "test-key".into(),
            &policy_with_fast_backoff(),
        )
        .unwrap();
        let content = backend.complete(&request()).unwrap();
        assert_eq!(content, "{\"score\": 1}");
        server.join().unwrap();
    }

    #[test]
    fn client_error_is_not_retried() {
        let Ok((endpoint, server)) = serve(vec![http_response("401 Unauthorized", "{}")]) else {
            eprintln!("skipping: cannot bind a loopback listener in this environment");
            return;
        };
        let backend = HttpBackend::new(
            endpoint,
            "test-deployment".into(),
            "v".into(),
            "bad-key".into(),
            &policy_with_fast_backoff(),
        )
        .unwrap();
        let err = backend.complete(&request()).unwrap_err();
        assert!(err.message.contains("401"));
        server.join().unwrap();
    }
}
