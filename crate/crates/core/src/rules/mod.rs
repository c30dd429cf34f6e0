//! Directed interference rules over classified block pairs.
//!
//! A rule pre-filters the unordered block pairs of a [`BlockSet`] and then
//! evaluates each surviving pair exactly once, structurally, through the
//! gateway, or both.

mod engine;
mod structural;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{scope_overlap, Block, BlockSet, Modality};

pub use engine::{eval_llm, render_rule_prompt, run_directed, DirectedRun, EvalError, PairError, RunOptions, RunReport, Verdict};
pub use structural::eval_structural;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    Structural,
    Llm,
    Hybrid,
}

/// Ordered `Minor < Major < Critical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpactSeverity {
    Minor,
    Major,
    Critical,
}

impl ImpactSeverity {
    pub const ALL: [ImpactSeverity; 3] = [ImpactSeverity::Critical, ImpactSeverity::Major, ImpactSeverity::Minor];

    pub fn as_str(self) -> &'static str {
        match self {
            ImpactSeverity::Minor => "minor",
            ImpactSeverity::Major => "major",
            ImpactSeverity::Critical => "critical",
        }
    }
}

impl FromStr for ImpactSeverity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minor" => Ok(ImpactSeverity::Minor),
            "major" => Ok(ImpactSeverity::Major),
            "critical" => Ok(ImpactSeverity::Critical),
            _ => Err(()),
        }
    }
}

impl fmt::Display for ImpactSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Built-in structural predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralCheck {
    /// Mandate and prohibition share a capitalized action token.
    SharedActionToken,
    /// Both blocks carry priority markers and neither tier dominates.
    PriorityMarkers,
    /// Normalized texts are equal and long enough to matter.
    VerbatimDuplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prefilter {
    #[serde(default)]
    pub require_scope_overlap: bool,
    /// The pair's modalities must be exactly these two, in either order.
    #[serde(default)]
    pub pair_modalities: Option<[Modality; 2]>,
    /// Each block's modality must be one of these.
    #[serde(default)]
    pub allowed_modalities: Option<Vec<Modality>>,
}

impl Prefilter {
    pub fn accepts(&self, a: &Block, b: &Block) -> bool {
        if self.require_scope_overlap && scope_overlap(a, b).is_empty() {
            return false;
        }
        if let Some([x, y]) = self.pair_modalities {
            let ok = (a.modality == x && b.modality == y) || (a.modality == y && b.modality == x);
            if !ok {
                return false;
            }
        }
        if let Some(allowed) = &self.allowed_modalities {
            if !allowed.contains(&a.modality) || !allowed.contains(&b.modality) {
                return false;
            }
        }
        true
    }
}

fn default_min_text_chars() -> usize {
    40
}

fn default_min_token_chars() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub interference_type: String,
    pub mode: DetectionMode,
    #[serde(default)]
    pub check: Option<StructuralCheck>,
    /// Fixed severity of structural findings; ceiling for LLM verdicts.
    pub max_severity: ImpactSeverity,
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub prefilter: Prefilter,
    #[serde(default = "default_min_text_chars")]
    pub min_text_chars: usize,
    #[serde(default = "default_min_token_chars")]
    pub min_token_chars: usize,
}

impl Rule {
    pub fn uses_llm(&self) -> bool {
        self.mode != DetectionMode::Structural
    }

    fn validate(&self) -> Result<(), RuleError> {
        let bad = |message: &str| {
            Err(RuleError::Invalid {
                id: self.id.clone(),
                message: message.into(),
            })
        };
        match self.mode {
            DetectionMode::Structural if self.check.is_none() => bad("structural rule needs a `check`"),
            DetectionMode::Structural if self.template.is_some() => bad("structural rule must not carry a template"),
            DetectionMode::Llm if self.check.is_some() => bad("llm rule must not name a structural check"),
            DetectionMode::Hybrid if self.check.is_none() => bad("hybrid rule needs a `check`"),
            DetectionMode::Llm | DetectionMode::Hybrid
                if self.template.as_deref().map_or(true, |t| t.trim().is_empty()) =>
            {
                bad("llm and hybrid rules need a non-empty template")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("rule file: {0}")]
    Parse(String),
    #[error("rule file version {0} is not supported (expected 1)")]
    Version(u32),
    #[error("rule {id:?}: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    version: u32,
    #[serde(default)]
    rules: Vec<Rule>,
}

const BUILTIN: &str = include_str!("builtin.toml");

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN).expect("built-in rules are valid")
    }

    pub fn from_toml(s: &str) -> Result<Self, RuleError> {
        let file: RuleFile = toml::from_str(s).map_err(|e| RuleError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(RuleError::Version(file.version));
        }
        let mut seen = BTreeSet::new();
        for r in &file.rules {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(RuleError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { rules: file.rules })
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let s = std::fs::read_to_string(path).map_err(|e| RuleError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    /// Only the rules that never call a model.
    pub fn structural_only(&self) -> Self {
        Self {
            rules: self.rules.iter().filter(|r| !r.uses_llm()).cloned().collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Structural,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferencePattern {
    pub rule_id: String,
    pub interference_type: String,
    pub block_a: String,
    pub block_b: String,
    pub severity: ImpactSeverity,
    pub rationale: String,
    pub statically_detectable: bool,
    pub detection_provenance: Provenance,
}

/// Every ordered pair including self-pairs, times the rule count.
pub fn full_search_space(n: u64, r: u64) -> u64 {
    n * n * r
}

/// Unordered pairs `(a, b)`, `a` before `b` in document order, that pass
/// the rule's pre-filter, sorted by `(a.id, b.id)`.
pub fn prefilter<'a>(blocks: &'a BlockSet, rule: &Rule) -> Vec<(&'a Block, &'a Block)> {
    let bs = &blocks.blocks;
    let mut out = Vec::new();
    for (i, a) in bs.iter().enumerate() {
        for b in &bs[i + 1..] {
            if rule.prefilter.accepts(a, b) {
                out.push((a, b));
            }
        }
    }
    out.sort_by(|x, y| (&x.0.id, &x.1.id).cmp(&(&y.0.id, &y.1.id)));
    out
}
