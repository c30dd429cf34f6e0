//! OpenAI-compatible `/chat/completions` backend (OpenRouter and friends).

use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rust_decimal::Decimal;
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendReply, ChatRequest, ModelSpec};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
    /// Ceiling on concurrent in-flight requests.
    pub max_in_flight: usize,
}

pub struct LiveBackend {
    config: LiveConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            config,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.in_flight.lock().expect("in-flight lock");
        while *n >= limit {
            n = self.slot_freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock") -= 1;
        self.slot_freed.notify_one();
    }

    fn send(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut body = json!({
            "model": model.provider_route,
            "messages": request.messages,
            "usage": { "include": true },
        });
        if let Some(n) = request.max_output_tokens {
            body["max_tokens"] = json!(n);
        }
        let resp = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body);
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {detail}");
                return Err(if code == 429 || code >= 500 {
                    BackendError::Transport(msg)
                } else {
                    BackendError::Rejected(msg)
                });
            }
            Err(e) => return Err(BackendError::Transport(e.to_string())),
        };
        let v: Value = resp
            .into_json()
            .map_err(|e| BackendError::Transport(format!("unreadable response body: {e}")))?;
        parse_completion(&v)
    }
}

fn parse_completion(v: &Value) -> Result<BackendReply, BackendError> {
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| BackendError::Transport(format!("response without content: {v}")))?
        .to_string();
    let usage = &v["usage"];
    let reported_cost = match &usage["cost"] {
        Value::Number(n) => Decimal::from_str(&n.to_string())
            .or_else(|_| Decimal::from_scientific(&n.to_string()))
            .ok(),
        _ => None,
    };
    Ok(BackendReply {
        text,
        prompt_tokens: usage["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: usage["completion_tokens"].as_u64().unwrap_or(0),
        reported_cost,
    })
}

impl Backend for LiveBackend {
    fn invoke(&self, model: &ModelSpec, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.acquire();
        let out = self.send(model, request);
        self.release();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_shape_with_reported_cost() {
        let v = json!({
            "choices": [{"message": {"role": "assistant", "content": "hi"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3, "cost": 0.00042}
        });
        let r = parse_completion(&v).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!((r.prompt_tokens, r.completion_tokens), (12, 3));
        assert_eq!(r.reported_cost, Some(Decimal::from_str("0.00042").unwrap()));
    }

    #[test]
    fn missing_content_is_transport_error() {
        let v = json!({"error": {"message": "overloaded"}});
        assert!(matches!(parse_completion(&v), Err(BackendError::Transport(_))));
    }
}
