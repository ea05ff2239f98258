//! Chat-completion gateway: prompt templates, providers, retry and rate
//! limiting, and verbatim exchange records.
//!
//! Every successful completion appends exactly one [`LlmExchange`] to the
//! caller's sink, with the raw response stored unparsed; failures surface as
//! [`LlmError`] and leave no exchange behind.

mod provider;
mod template;

pub use provider::{
    chat_request_body, script_key, ChatProvider, CompletionOutput, CompletionRequest,
    HttpChatProvider, ScriptFallback, ScriptedProvider,
};
pub use template::{template, PromptTemplate, TemplateName};

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("transport error calling {provider}: {message}")]
    Transport { provider: String, message: String },
    #[error("HTTP {status} from {provider}: {body_excerpt}")]
    Http {
        provider: String,
        status: u16,
        body_excerpt: String,
        retryable: bool,
    },
    #[error("no completion content in response")]
    EmptyResponse,
    #[error("retry budget exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("scripted provider has no entry for key `{0}`")]
    UnknownScriptKey(String),
    #[error("duplicate key `{0}` in script file")]
    DuplicateScriptKey(String),
    #[error("failed to load script {path}: {message}")]
    ScriptLoad { path: String, message: String },
}

impl LlmError {
    /// Transient failures worth retrying: transport errors, 429 and 5xx.
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport { .. } => true,
            LlmError::Http { retryable, .. } => *retryable,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Decoding parameters sent with every request. Temperature 0 keeps runs
/// reproducible unless a config overrides it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            model: "default".into(),
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
}

/// Verbatim record of one completed LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub template_name: TemplateName,
    pub rendered_messages: Vec<Message>,
    /// Unparsed completion text, exactly as returned.
    pub raw_response: String,
    pub provider: String,
    pub latency_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_counts: Option<TokenCounts>,
}

/// Retry policy for transient provider failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)))
            .min(self.max_delay);
        if self.jitter {
            let factor = rand::rng().random_range(0.5..1.0);
            exp.mul_f64(factor)
        } else {
            exp
        }
    }
}

/// Token-bucket rate limit (requests per minute) plus an in-flight cap,
/// shared across all callers of a client.
pub struct RateLimiter {
    state: Mutex<LimiterState>,
    cv: Condvar,
    refill_per_sec: Option<f64>,
    capacity: f64,
    max_in_flight: Option<usize>,
}

struct LimiterState {
    tokens: f64,
    last_refill: Instant,
    in_flight: usize,
}

impl RateLimiter {
    pub fn new(requests_per_minute: Option<u32>, max_in_flight: Option<usize>) -> Self {
        let capacity = requests_per_minute.map_or(1.0, |r| r as f64);
        RateLimiter {
            state: Mutex::new(LimiterState {
                tokens: capacity,
                last_refill: Instant::now(),
                in_flight: 0,
            }),
            cv: Condvar::new(),
            refill_per_sec: requests_per_minute.map(|r| r as f64 / 60.0),
            capacity,
            max_in_flight,
        }
    }

    /// Block until a request slot is available.
    pub fn acquire(self: &Arc<Self>) -> InFlightGuard {
        let mut state = self.state.lock().expect("limiter lock");
        loop {
            if let Some(rate) = self.refill_per_sec {
                let elapsed = state.last_refill.elapsed().as_secs_f64();
                state.tokens = (state.tokens + elapsed * rate).min(self.capacity);
                state.last_refill = Instant::now();
            }
            let flight_ok = self.max_in_flight.is_none_or(|cap| state.in_flight < cap);
            let tokens_ok = self.refill_per_sec.is_none() || state.tokens >= 1.0;
            if flight_ok && tokens_ok {
                if self.refill_per_sec.is_some() {
                    state.tokens -= 1.0;
                }
                state.in_flight += 1;
                return InFlightGuard {
                    limiter: Arc::clone(self),
                };
            }
            let (next, _) = self
                .cv
                .wait_timeout(state, Duration::from_millis(20))
                .expect("limiter lock");
            state = next;
        }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("limiter lock").in_flight
    }
}

pub struct InFlightGuard {
    limiter: Arc<RateLimiter>,
}

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter lock");
        state.in_flight = state.in_flight.saturating_sub(1);
        drop(state);
        self.limiter.cv.notify_all();
    }
}

/// Gateway over a provider: renders templates, retries transient failures,
/// enforces the shared rate limit, and records every completed call.
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    params: DecodingParams,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, params: DecodingParams) -> Self {
        LlmClient {
            provider,
            params,
            retry: RetryPolicy::default(),
            limiter: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn params(&self) -> &DecodingParams {
        &self.params
    }

    /// Render `template` with `bindings` and complete it. On success exactly
    /// one exchange is appended to `sink` and the raw completion is returned.
    pub fn call(
        &self,
        template_name: TemplateName,
        bindings: BTreeMap<String, String>,
        sink: &mut Vec<LlmExchange>,
    ) -> Result<String, LlmError> {
        let messages = template(template_name).render(&bindings)?;
        let request = CompletionRequest {
            template: template_name,
            bindings,
            messages: messages.clone(),
            params: self.params.clone(),
        };

        let mut last_err: Option<LlmError> = None;
        for attempt in 1..=self.retry.max_attempts {
            let _guard = self.limiter.as_ref().map(RateLimiter::acquire);
            let started = Instant::now();
            match self.provider.complete(&request) {
                Ok(output) => {
                    sink.push(LlmExchange {
                        template_name,
                        rendered_messages: messages,
                        raw_response: output.text.clone(),
                        provider: self.provider.name().to_string(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        token_counts: output.token_counts,
                    });
                    return Ok(output.text);
                }
                Err(err) if err.is_retryable() => {
                    log::warn!(
                        "attempt {attempt}/{} against {} failed: {err}",
                        self.retry.max_attempts,
                        self.provider.name()
                    );
                    last_err = Some(err);
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.delay(attempt));
                    }
                }
                Err(err) => return Err(err),
            }
        }
        Err(LlmError::RetriesExhausted {
            attempts: self.retry.max_attempts,
            last: last_err.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct AlwaysFails {
        attempts: AtomicU32,
    }

    impl ChatProvider for AlwaysFails {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _req: &CompletionRequest) -> Result<CompletionOutput, LlmError> {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            Err(LlmError::Transport {
                provider: "flaky".into(),
                message: "connection refused".into(),
            })
        }
    }

    #[test]
    fn retries_then_exhausts() {
        let provider = Arc::new(AlwaysFails {
            attempts: AtomicU32::new(0),
        });
        let client = LlmClient::new(provider.clone(), DecodingParams::default()).with_retry(
            RetryPolicy {
                max_attempts: 3,
                base_delay: Duration::from_millis(1),
                max_delay: Duration::from_millis(2),
                jitter: false,
            },
        );
        let mut sink = Vec::new();
        let err = client
            .call(
                TemplateName::Segment,
                [("sen".to_string(), "x".to_string())].into(),
                &mut sink,
            )
            .unwrap_err();
        match err {
            LlmError::RetriesExhausted { attempts, .. } => assert_eq!(attempts, 3),
            e => panic!("expected RetriesExhausted, got {e:?}"),
        }
        assert_eq!(provider.attempts.load(Ordering::SeqCst), 3);
        assert!(sink.is_empty(), "failed calls record no exchange");
    }

    struct NonRetryable;

    impl ChatProvider for NonRetryable {
        fn name(&self) -> &str {
            "strict"
        }
        fn complete(&self, _req: &CompletionRequest) -> Result<CompletionOutput, LlmError> {
            Err(LlmError::Http {
                provider: "strict".into(),
                status: 400,
                body_excerpt: "bad request".into(),
                retryable: false,
            })
        }
    }

    #[test]
    fn non_retryable_fails_immediately() {
        let client = LlmClient::new(Arc::new(NonRetryable), DecodingParams::default());
        let mut sink = Vec::new();
        let err = client
            .call(
                TemplateName::Decontext,
                [("sen".to_string(), "x".to_string())].into(),
                &mut sink,
            )
            .unwrap_err();
        assert!(matches!(err, LlmError::Http { status: 400, .. }));
    }

    #[test]
    fn successful_call_records_one_exchange() {
        let provider = ScriptedProvider::from_entries(
            vec![(
                "SEGMENT:hello world".to_string(),
                "hello | world".to_string(),
            )],
            ScriptFallback::Error,
        )
        .unwrap();
        let client = LlmClient::new(Arc::new(provider), DecodingParams::default());
        let mut sink = Vec::new();
        let text = client
            .call(
                TemplateName::Segment,
                [("sen".to_string(), "hello world".to_string())].into(),
                &mut sink,
            )
            .unwrap();
        assert_eq!(text, "hello | world");
        assert_eq!(sink.len(), 1);
        assert_eq!(sink[0].template_name, TemplateName::Segment);
        assert_eq!(sink[0].raw_response, "hello | world");
        assert_eq!(sink[0].provider, "scripted");
        assert_eq!(sink[0].rendered_messages.len(), 2);
    }

    #[test]
    fn limiter_tracks_in_flight() {
        let limiter = Arc::new(RateLimiter::new(None, Some(2)));
        let g1 = limiter.acquire();
        let g2 = limiter.acquire();
        assert_eq!(limiter.in_flight(), 2);
        drop(g1);
        assert_eq!(limiter.in_flight(), 1);
        drop(g2);
        assert_eq!(limiter.in_flight(), 0);
    }

    #[test]
    fn limiter_token_bucket_caps_burst() {
        // 60 rpm = 1 token/s; after draining the initial burst the next
        // acquire must wait for a refill.
        let limiter = Arc::new(RateLimiter::new(Some(60), None));
        {
            let mut state = limiter.state.lock().unwrap();
            state.tokens = 1.0;
        }
        let started = Instant::now();
        drop(limiter.acquire());
        drop(limiter.acquire());
        assert!(started.elapsed() >= Duration::from_millis(500));
    }
}
