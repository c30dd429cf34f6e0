//! Provider-agnostic chat completion with per-call cost accounting.
//!
//! A [`Gateway`] wraps one [`Backend`] (live HTTP, replay store, scripted
//! mock) with a model registry, bounded transport retries and a shared
//! [`Ledger`]. Every backend invocation, retries and failures included,
//! appends exactly one [`CostRecord`].

mod ledger;
mod live;
mod mock;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{
    ledger_totals, load_ledger, write_ledger, CallId, CostProvenance, CostRecord, Ledger,
    LedgerError, LedgerTotals, ModelTotal,
};
pub use live::{LiveBackend, LiveConfig};
pub use mock::{CountingBackend, DenyAll, FnBackend, ScriptStep, ScriptedBackend};
pub use replay::{request_digest, Recorder, ReplayError, ReplayRecord, ReplayStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub provider_route: String,
    /// Price per one million prompt tokens.
    pub price_in: Decimal,
    /// Price per one million completion tokens.
    pub price_out: Decimal,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>, route: impl Into<String>, price_in: Decimal, price_out: Decimal) -> Self {
        Self {
            model_id: model_id.into(),
            provider_route: route.into(),
            price_in,
            price_out,
        }
    }

    /// A zero-priced spec whose route equals its id. Handy in tests.
    pub fn free(model_id: impl Into<String>) -> Self {
        let id = model_id.into();
        Self::new(id.clone(), id, Decimal::ZERO, Decimal::ZERO)
    }

    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> Decimal {
        let million = Decimal::from(1_000_000u32);
        (Decimal::from(prompt_tokens) * self.price_in + Decimal::from(completion_tokens) * self.price_out)
            / million
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: MessageRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            max_output_tokens: None,
        }
    }

    pub fn single(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::new(model_id, vec![ChatMessage::user(prompt)])
    }
}

/// What a backend hands back for one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Provider-reported cost; overrides the price-table computation.
    pub reported_cost: Option<Decimal>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self {
            text: text.into(),
            prompt_tokens,
            completion_tokens,
            reported_cost: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Retryable: network, timeout, 429 or 5xx.
    #[error("transport: {0}")]
    Transport(String),
    #[error("request rejected by provider: {0}")]
    Rejected(String),
    #[error("no recorded response for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("scripted backend has no more responses")]
    ScriptExhausted,
    #[error("network access denied for offline operation")]
    Denied,
}

pub trait Backend: Send + Sync {
    fn invoke(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GatewayError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replay miss: no recorded response for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error: {0}")]
    Backend(BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first transport failure.
    pub max_retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff: Duration::ZERO,
        }
    }
}

/// A successful completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub call_id: CallId,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    models: BTreeMap<String, ModelSpec>,
    ledger: Arc<Ledger>,
    retry: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("models", &self.models.keys().collect::<Vec<_>>())
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, models: impl IntoIterator<Item = ModelSpec>) -> Self {
        Self {
            backend,
            models: models.into_iter().map(|m| (m.model_id.clone(), m)).collect(),
            ledger: Arc::new(Ledger::default()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_ledger(mut self, ledger: Arc<Ledger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn model(&self, model_id: &str) -> Option<&ModelSpec> {
        self.models.get(model_id)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        self.complete_linked(request, None)
    }

    /// Like [`complete`](Self::complete), but the first ledger record links
    /// back to `retry_of`. Used when a caller re-asks after malformed output.
    pub fn complete_linked(
        &self,
        request: &ChatRequest,
        retry_of: Option<CallId>,
    ) -> Result<Completion, GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        let spec = self
            .models
            .get(&request.model_id)
            .ok_or_else(|| GatewayError::UnknownModel(request.model_id.clone()))?;
        let mut link = retry_of;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let call_id = self.ledger.next_call_id();
            let result = self.backend.invoke(spec, request);
            let record = match &result {
                Ok(reply) => {
                    let (cost, provenance) = match reply.reported_cost {
                        Some(c) => (c, CostProvenance::Reported),
                        None => (
                            spec.cost(reply.prompt_tokens, reply.completion_tokens),
                            CostProvenance::Computed,
                        ),
                    };
                    CostRecord {
                        call_id,
                        model_id: spec.model_id.clone(),
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                        cost,
                        provenance,
                        retry_of: link,
                    }
                }
                Err(_) => CostRecord {
                    call_id,
                    model_id: spec.model_id.clone(),
                    prompt_tokens: 0,
                    completion_tokens: 0,
                    cost: Decimal::ZERO,
                    provenance: CostProvenance::Computed,
                    retry_of: link,
                },
            };
            self.ledger.append(record);
            match result {
                Ok(reply) => {
                    return Ok(Completion {
                        call_id,
                        text: reply.text,
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                    })
                }
                Err(BackendError::Transport(message)) => {
                    if attempts > self.retry.max_retries {
                        return Err(GatewayError::Transport { attempts, message });
                    }
                    link = Some(call_id);
                    if !self.retry.backoff.is_zero() {
                        std::thread::sleep(self.retry.backoff * attempts);
                    }
                }
                Err(BackendError::ReplayMiss { digest }) => {
                    return Err(GatewayError::ReplayMiss { digest })
                }
                Err(other) => return Err(GatewayError::Backend(other)),
            }
        }
    }
}
