use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{scope_overlap, Block, BlockSet};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::text::{extract_fenced_block, PhraseSet};

use super::{
    eval_structural, full_search_space, prefilter, DetectionMode, ImpactSeverity, InterferencePattern,
    Provenance, Rule, RuleSet,
};

const VERDICT_CONTRACT: &str = "\
Reply with a single fenced JSON block and nothing after it:
```json
{\"interferes\": true, \"severity\": \"critical | major | minor\", \"rationale\": \"one sentence\"}
```
Use {\"interferes\": false} when the blocks do not interfere.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("rule {rule_id:?} cannot be evaluated in this mode")]
    Mode { rule_id: String },
    #[error("malformed verdict: {message}")]
    Malformed { message: String, raw: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub interferes: bool,
    pub severity: Option<ImpactSeverity>,
    pub rationale: String,
}

#[derive(Deserialize)]
struct WireVerdict {
    interferes: bool,
    #[serde(default)]
    severity: Option<String>,
    #[serde(default)]
    rationale: Option<String>,
}

impl Verdict {
    pub fn parse(raw: &str) -> Result<Self, String> {
        let wire: WireVerdict = serde_json::from_str(extract_fenced_block(raw)).map_err(|e| e.to_string())?;
        let severity = match (&wire.severity, wire.interferes) {
            (Some(s), _) => Some(s.parse().map_err(|_| format!("unknown severity {s:?}"))?),
            (None, true) => return Err("severity is required when interferes is true".into()),
            (None, false) => None,
        };
        Ok(Self {
            interferes: wire.interferes,
            severity,
            rationale: wire.rationale.unwrap_or_default(),
        })
    }
}

/// Fills the rule template and appends the verdict contract.
pub fn render_rule_prompt(rule: &Rule, a: &Block, b: &Block) -> Option<String> {
    let template = rule.template.as_deref()?;
    let shared: Vec<String> = scope_overlap(a, b).into_iter().collect();
    let mut s = template
        .replace("{{type}}", &rule.interference_type)
        .replace("{{shared_scope}}", &shared.join(", "));
    for (prefix, blk) in [("a", a), ("b", b)] {
        let scope: Vec<&str> = blk.scope.iter().map(String::as_str).collect();
        s = s
            .replace(&format!("{{{{{prefix}.id}}}}"), &blk.id)
            .replace(&format!("{{{{{prefix}.tier}}}}"), blk.tier.as_str())
            .replace(&format!("{{{{{prefix}.category}}}}"), &blk.category)
            .replace(&format!("{{{{{prefix}.modality}}}}"), blk.modality.as_str())
            .replace(&format!("{{{{{prefix}.scope}}}}"), &scope.join(", "))
            .replace(&format!("{{{{{prefix}.text}}}}"), blk.text.trim());
    }
    Some(format!("{}\n\n{VERDICT_CONTRACT}", s.trim_end()))
}

/// A shared scope tag is spelled out in both texts, so a compiler could
/// have seen the overlap without semantic reasoning.
fn textual_scope_witness(a: &Block, b: &Block) -> bool {
    scope_overlap(a, b).iter().any(|tag| {
        let p = PhraseSet::new([tag.as_str()], true);
        p.matches(&a.text) && p.matches(&b.text)
    })
}

/// Asks the model for a verdict on one pair. One re-ask on malformed output.
pub fn eval_llm(
    rule: &Rule,
    a: &Block,
    b: &Block,
    gateway: &Gateway,
    model_id: &str,
) -> Result<Option<InterferencePattern>, EvalError> {
    if rule.mode == DetectionMode::Structural {
        return Err(EvalError::Mode { rule_id: rule.id.clone() });
    }
    let prompt = render_rule_prompt(rule, a, b).ok_or_else(|| EvalError::Mode { rule_id: rule.id.clone() })?;
    let request = ChatRequest::new(model_id, vec![ChatMessage::user(prompt)]);
    let first = gateway.complete(&request)?;
    let verdict = match Verdict::parse(&first.text) {
        Ok(v) => v,
        Err(message) => {
            let mut retry = request.clone();
            retry.messages.push(ChatMessage::assistant(first.text.clone()));
            retry.messages.push(ChatMessage::user(format!(
                "Your verdict could not be parsed ({message}). Reply again with only the fenced JSON block."
            )));
            let second = gateway.complete_linked(&retry, Some(first.call_id))?;
            Verdict::parse(&second.text).map_err(|message| EvalError::Malformed {
                message,
                raw: second.text.clone(),
            })?
        }
    };
    if !verdict.interferes {
        return Ok(None);
    }
    let severity = verdict.severity.unwrap_or(rule.max_severity).min(rule.max_severity);
    Ok(Some(InterferencePattern {
        rule_id: rule.id.clone(),
        interference_type: rule.interference_type.clone(),
        block_a: a.id.clone(),
        block_b: b.id.clone(),
        severity,
        rationale: verdict.rationale,
        statically_detectable: textual_scope_witness(a, b),
        detection_provenance: Provenance::Llm,
    }))
}

fn evaluate(rule: &Rule, a: &Block, b: &Block, gateway: &Gateway, model_id: &str) -> Result<Option<InterferencePattern>, EvalError> {
    match rule.mode {
        DetectionMode::Structural => eval_structural(rule, a, b),
        DetectionMode::Llm => eval_llm(rule, a, b, gateway, model_id),
        DetectionMode::Hybrid => {
            let Some(candidate) = eval_structural(rule, a, b)? else {
                return Ok(None);
            };
            Ok(eval_llm(rule, a, b, gateway, model_id)?.map(|confirmed| InterferencePattern {
                rationale: if confirmed.rationale.is_empty() {
                    candidate.rationale
                } else {
                    format!("{}; {}", candidate.rationale, confirmed.rationale)
                },
                statically_detectable: true,
                detection_provenance: Provenance::Structural,
                ..confirmed
            }))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Model used for llm and hybrid rules.
    pub model_id: String,
    /// Ceiling on concurrent pair evaluations.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            model_id: String::new(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulePairs {
    pub rule_id: String,
    pub pairs: usize,
    pub patterns: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairError {
    pub rule_id: String,
    pub block_a: String,
    pub block_b: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub blocks: usize,
    /// `n² · r`, the unfiltered upper bound.
    pub search_space: u64,
    pub rules: Vec<RulePairs>,
    pub evaluations: usize,
    /// Gateway invocations, re-asks and transport retries included.
    pub llm_calls: usize,
    pub errors: Vec<PairError>,
}

impl RunReport {
    pub fn prefiltered(&self) -> usize {
        self.rules.iter().map(|r| r.pairs).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectedRun {
    pub patterns: Vec<InterferencePattern>,
    pub report: RunReport,
}

/// Evaluates every pre-filtered pair of every rule exactly once.
///
/// Output order is `(severity desc, rule_id, block_a, block_b)` regardless
/// of `jobs`.
pub fn run_directed(blocks: &BlockSet, rules: &RuleSet, gateway: &Gateway, options: &RunOptions) -> DirectedRun {
    let mut work: Vec<(&Rule, &Block, &Block)> = Vec::new();
    let mut per_rule = Vec::new();
    for rule in &rules.rules {
        let pairs = prefilter(blocks, rule);
        per_rule.push(RulePairs {
            rule_id: rule.id.clone(),
            pairs: pairs.len(),
            patterns: 0,
        });
        work.extend(pairs.into_iter().map(|(a, b)| (rule, a, b)));
    }

    let calls_before = gateway.ledger().len();
    let results: Mutex<Vec<Option<Result<Option<InterferencePattern>, EvalError>>>> =
        Mutex::new(vec![None; work.len()]);
    let cursor = AtomicUsize::new(0);
    let worker = || loop {
        let i = cursor.fetch_add(1, Ordering::Relaxed);
        let Some(&(rule, a, b)) = work.get(i) else { break };
        let r = evaluate(rule, a, b, gateway, &options.model_id);
        results.lock().expect("results lock")[i] = Some(r);
    };
    let jobs = options.jobs.clamp(1, work.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }

    let mut patterns = Vec::new();
    let mut errors = Vec::new();
    for (&(rule, a, b), r) in work.iter().zip(results.into_inner().expect("results lock")) {
        match r.expect("every work item evaluated") {
            Ok(Some(p)) => patterns.push(p),
            Ok(None) => {}
            Err(e) => errors.push(PairError {
                rule_id: rule.id.clone(),
                block_a: a.id.clone(),
                block_b: b.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    patterns.sort_by(|x, y| {
        y.severity
            .cmp(&x.severity)
            .then_with(|| x.rule_id.cmp(&y.rule_id))
            .then_with(|| x.block_a.cmp(&y.block_a))
            .then_with(|| x.block_b.cmp(&y.block_b))
    });
    for rp in &mut per_rule {
        rp.patterns = patterns.iter().filter(|p| p.rule_id == rp.rule_id).count();
    }
    DirectedRun {
        report: RunReport {
            blocks: blocks.len(),
            search_space: full_search_space(blocks.len() as u64, rules.len() as u64),
            rules: per_rule,
            evaluations: work.len(),
            llm_calls: gateway.ledger().len() - calls_before,
            errors,
        },
        patterns,
    }
}
