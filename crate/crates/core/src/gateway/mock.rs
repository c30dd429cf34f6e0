use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Backend, BackendError, BackendReply, ChatRequest, ModelSpec};

/// One scripted outcome.
#[derive(Debug, Clone)]
pub struct ScriptStep(pub Result<BackendReply, BackendError>);

impl ScriptStep {
    pub fn reply(text: impl Into<String>, prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self(Ok(BackendReply::text(text, prompt_tokens, completion_tokens)))
    }

    pub fn transport(message: impl Into<String>) -> Self {
        Self(Err(BackendError::Transport(message.into())))
    }
}

/// Returns its script in order, regardless of the request.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    steps: Mutex<VecDeque<ScriptStep>>,
}

impl ScriptedBackend {
    pub fn new(steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        Self {
            steps: Mutex::new(steps.into_iter().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.steps.lock().expect("script lock").len()
    }
}

impl Backend for ScriptedBackend {
    fn invoke(&self, _model: &ModelSpec, _request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.steps
            .lock()
            .expect("script lock")
            .pop_front()
            .ok_or(BackendError::ScriptExhausted)?
            .0
    }
}

/// Wraps a closure as a backend.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ModelSpec, &ChatRequest) -> Result<BackendReply, BackendError> + Send + Sync,
{
    fn invoke(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        (self.0)(model, request)
    }
}

/// Counts invocations before delegating.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn invoke(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.invoke(model, request)
    }
}

/// Refuses every call. Stands in for the network in offline code paths.
#[derive(Debug, Default, Clone, Copy)]
pub struct DenyAll;

impl Backend for DenyAll {
    fn invoke(&self, _model: &ModelSpec, _request: &ChatRequest) -> Result<BackendReply, BackendError> {
        Err(BackendError::Denied)
    }
}
