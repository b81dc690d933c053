//! Chat-completion access: a live HTTP client for the common
//! chat-completions wire format and a deterministic scripted provider for
//! tests and offline runs.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::TokenUsage;
use crate::prompt::{PromptBundle, PromptPurpose};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure for {model_id}: {detail}")]
    Transport { model_id: String, detail: String },
    #[error("retries exhausted for {model_id} after {attempts} attempts: {detail}")]
    RetriesExhausted {
        model_id: String,
        attempts: u32,
        detail: String,
    },
    #[error("malformed response from {model_id}: {detail}")]
    Protocol { model_id: String, detail: String },
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("script exhausted for question {question_id:?} at call ordinal {ordinal}")]
    ScriptExhausted { question_id: String, ordinal: usize },
    #[error("invalid provider config: {0}")]
    BadConfig(String),
}

/// Sampling parameters transmitted with every call. Greedy defaults keep
/// runs reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for DecodingParams {
    fn default() -> DecodingParams {
        DecodingParams {
            temperature: 0.0,
            top_p: 1.0,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), String> {
        // NaN fails both checks by design
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        Ok(())
    }
}

/// One completed call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    pub text: String,
    pub usage: TokenUsage,
    pub model_id: String,
    pub latency_ms: u64,
}

/// Uniform completion interface. Implementations must be safe for
/// concurrent use; attempts running in parallel share one handle.
pub trait Provider: Send + Sync {
    /// Requests a completion for `bundle`. `question_id` identifies the
    /// work item (the scripted provider keys its canned responses on it).
    fn complete(
        &self,
        question_id: &str,
        bundle: &PromptBundle,
        decoding: &DecodingParams,
    ) -> Result<CompletionResult, ProviderError>;

    fn model_id(&self) -> &str;
}

/// Per-model token accumulation, the input to cost reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UsageLedger {
    per_model: BTreeMap<String, TokenUsage>,
}

impl UsageLedger {
    pub fn new() -> UsageLedger {
        UsageLedger::default()
    }

    /// Folds one result's usage into its model's running total.
    pub fn record(&mut self, result: &CompletionResult) {
        self.add(&result.model_id, result.usage);
    }

    pub fn add(&mut self, model_id: &str, usage: TokenUsage) {
        *self
            .per_model
            .entry(model_id.to_string())
            .or_insert(TokenUsage::ZERO) += usage;
    }

    pub fn get(&self, model_id: &str) -> TokenUsage {
        self.per_model
            .get(model_id)
            .copied()
            .unwrap_or(TokenUsage::ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, TokenUsage)> {
        self.per_model.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// One canned response in a script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub text: String,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl ScriptedCall {
    pub fn new(
        text: impl Into<String>,
        prompt_tokens: u64,
        completion_tokens: u64,
    ) -> ScriptedCall {
        ScriptedCall {
            text: text.into(),
            usage: TokenUsage::new(prompt_tokens, completion_tokens),
        }
    }
}

/// One entry in the scripted provider's invocation log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub question_id: String,
    pub ordinal: usize,
    pub purpose: PromptPurpose,
}

#[derive(Default)]
struct ScriptState {
    cursors: HashMap<String, usize>,
    log: Vec<Invocation>,
}

/// Deterministic test double: per-question ordered response lists keyed by
/// call ordinal. Consuming past the end of a script is an error (making
/// over-calling detectable) unless `repeat_last` is set, in which case the
/// final entry keeps answering; single-entry scripts then behave the same
/// no matter how many grid cells revisit the question or in what order,
/// which keeps parallel runs reproducible. Internally serialized so the
/// invocation log has a total order even under concurrent use.
pub struct ScriptedProvider {
    model_id: String,
    scripts: HashMap<String, Vec<ScriptedCall>>,
    repeat_last: bool,
    state: Mutex<ScriptState>,
}

impl ScriptedProvider {
    pub fn new(model_id: impl Into<String>) -> ScriptedProvider {
        ScriptedProvider {
            model_id: model_id.into(),
            scripts: HashMap::new(),
            repeat_last: false,
            state: Mutex::new(ScriptState::default()),
        }
    }

    pub fn from_scripts(
        model_id: impl Into<String>,
        scripts: HashMap<String, Vec<ScriptedCall>>,
    ) -> ScriptedProvider {
        ScriptedProvider {
            model_id: model_id.into(),
            scripts,
            repeat_last: false,
            state: Mutex::new(ScriptState::default()),
        }
    }

    /// Registers the ordered responses for one question.
    pub fn script(mut self, question_id: impl Into<String>, calls: Vec<ScriptedCall>) -> Self {
        self.scripts.insert(question_id.into(), calls);
        self
    }

    /// Keep serving the final scripted entry once a script runs out
    /// instead of erroring.
    pub fn with_repeat_last(mut self, repeat_last: bool) -> Self {
        self.repeat_last = repeat_last;
        self
    }

    pub fn add_script(&mut self, question_id: impl Into<String>, calls: Vec<ScriptedCall>) {
        self.scripts.insert(question_id.into(), calls);
    }

    /// Snapshot of every call made so far, in order.
    pub fn invocations(&self) -> Vec<Invocation> {
        self.state.lock().expect("script state").log.clone()
    }

    /// Number of calls made for one question.
    pub fn calls_for(&self, question_id: &str) -> usize {
        self.state
            .lock()
            .expect("script state")
            .cursors
            .get(question_id)
            .copied()
            .unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.state.lock().expect("script state").log.len()
    }
}

impl Provider for ScriptedProvider {
    fn complete(
        &self,
        question_id: &str,
        bundle: &PromptBundle,
        _decoding: &DecodingParams,
    ) -> Result<CompletionResult, ProviderError> {
        let mut state = self.state.lock().expect("script state");
        let ordinal = *state.cursors.get(question_id).unwrap_or(&0);
        let calls = self.scripts.get(question_id);
        let entry = match calls.and_then(|calls| calls.get(ordinal)) {
            Some(entry) => Some(entry),
            None if self.repeat_last => calls.and_then(|calls| calls.last()),
            None => None,
        };
        let call = entry
            .ok_or_else(|| ProviderError::ScriptExhausted {
                question_id: question_id.to_string(),
                ordinal,
            })?
            .clone();
        state.cursors.insert(question_id.to_string(), ordinal + 1);
        state.log.push(Invocation {
            question_id: question_id.to_string(),
            ordinal,
            purpose: bundle.purpose,
        });
        Ok(CompletionResult {
            text: call.text,
            usage: call.usage,
            model_id: self.model_id.clone(),
            latency_ms: 0,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Script file format for offline CLI runs: question id to ordered calls.
pub fn parse_script_file(text: &str) -> Result<HashMap<String, Vec<ScriptedCall>>, String> {
    serde_json::from_str(text).map_err(|e| format!("bad script file: {e}"))
}

/// Connection settings for a live chat-completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model_id: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub jitter: bool,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_base_ms() -> u64 {
    500
}
fn default_max_in_flight() -> usize {
    4
}

impl ProviderConfig {
    /// Config with all tunables at their defaults.
    pub fn new(
        base_url: impl Into<String>,
        api_key_env: impl Into<String>,
        model_id: impl Into<String>,
    ) -> ProviderConfig {
        ProviderConfig {
            base_url: base_url.into(),
            api_key_env: api_key_env.into(),
            model_id: model_id.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            jitter: false,
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_secs == 0 {
            return Err(ProviderError::BadConfig("timeout_secs must be > 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::BadConfig("max_in_flight must be > 0".into()));
        }
        if self.base_url.is_empty() {
            return Err(ProviderError::BadConfig("base_url is empty".into()));
        }
        Ok(())
    }
}

/// Counting semaphore bounding in-flight requests.
struct InFlightGate {
    available: Mutex<usize>,
    released: Condvar,
}

impl InFlightGate {
    fn new(permits: usize) -> InFlightGate {
        InFlightGate {
            available: Mutex::new(permits),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut available = self.available.lock().expect("gate");
        while *available == 0 {
            available = self.released.wait(available).expect("gate");
        }
        *available -= 1;
    }

    fn release(&self) {
        *self.available.lock().expect("gate") += 1;
        self.released.notify_one();
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Live HTTP client. Retries transport failures, 5xx, and 429 with
/// exponential backoff (honoring Retry-After), and bounds concurrent
/// requests with a counting semaphore. Usage comes from the endpoint's
/// own accounting; only the successful call's usage is ever reported.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    gate: InFlightGate,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<HttpProvider, ProviderError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| ProviderError::MissingApiKey(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::BadConfig(format!("http client: {e}")))?;
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(HttpProvider {
            config,
            api_key,
            client,
            gate,
        })
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        )
    }

    /// Backoff before retry `attempt` (1-based): base * 2^(attempt-1),
    /// plus up to one extra base period of clock-derived jitter.
    fn backoff(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        if let Some(wait) = retry_after {
            return wait;
        }
        let base = self.config.backoff_base_ms.max(1);
        let mut ms = base.saturating_mul(1u64 << (attempt - 1).min(16));
        if self.config.jitter {
            let nanos = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.subsec_nanos() as u64)
                .unwrap_or(0);
            ms = ms.saturating_add(nanos % base);
        }
        Duration::from_millis(ms)
    }

    fn call_once(
        &self,
        bundle: &PromptBundle,
        decoding: &DecodingParams,
    ) -> Result<CompletionResult, CallFailure> {
        let mut messages = Vec::new();
        if let Some(system) = &bundle.system {
            messages.push(WireMessage {
                role: "system",
                content: system,
            });
        }
        messages.push(WireMessage {
            role: "user",
            content: &bundle.user,
        });
        let request = WireRequest {
            model: &self.config.model_id,
            messages,
            temperature: decoding.temperature,
            top_p: decoding.top_p,
        };
        let started = Instant::now();
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&request)
            .send()
            .map_err(|e| CallFailure::Retryable {
                detail: format!("transport: {e}"),
                retry_after: None,
            })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let retry_after = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(CallFailure::Retryable {
                detail: format!("http status {status}"),
                retry_after,
            });
        }
        if !status.is_success() {
            return Err(CallFailure::Fatal(format!("http status {status}")));
        }
        let body: WireResponse = response
            .json()
            .map_err(|e| CallFailure::Fatal(format!("malformed body: {e}")))?;
        let text = body
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| CallFailure::Fatal("no choices[0].message.content".to_string()))?;
        let usage = body
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .ok_or_else(|| CallFailure::Fatal("no usage block".to_string()))?;
        Ok(CompletionResult {
            text,
            usage,
            model_id: self.config.model_id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

enum CallFailure {
    Retryable {
        detail: String,
        retry_after: Option<Duration>,
    },
    Fatal(String),
}

impl Provider for HttpProvider {
    fn complete(
        &self,
        _question_id: &str,
        bundle: &PromptBundle,
        decoding: &DecodingParams,
    ) -> Result<CompletionResult, ProviderError> {
        self.gate.acquire();
        let result = self.complete_locked(bundle, decoding);
        self.gate.release();
        result
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}

impl HttpProvider {
    fn complete_locked(
        &self,
        bundle: &PromptBundle,
        decoding: &DecodingParams,
    ) -> Result<CompletionResult, ProviderError> {
        let mut last_detail = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.call_once(bundle, decoding) {
                Ok(result) => return Ok(result),
                Err(CallFailure::Fatal(detail)) => {
                    return Err(ProviderError::Protocol {
                        model_id: self.config.model_id.clone(),
                        detail,
                    })
                }
                Err(CallFailure::Retryable {
                    detail,
                    retry_after,
                }) => {
                    last_detail = detail;
                    if attempt < self.config.max_retries {
                        std::thread::sleep(self.backoff(attempt + 1, retry_after));
                    }
                }
            }
        }
        Err(ProviderError::RetriesExhausted {
            model_id: self.config.model_id.clone(),
            attempts: self.config.max_retries + 1,
            detail: last_detail,
        })
    }
}
