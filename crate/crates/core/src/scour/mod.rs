//! Undirected multi-model exploration with map-passing and convergent
//! termination.
//!
//! Passes run strictly in sequence. Pass `i` uses `roster[i - 1]` and sees
//! every finding and unexplored note of passes `1..i`. The campaign stops
//! once the last `k` passes all vote against sending another explorer.

mod campaign;
mod response;
mod template;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub use campaign::{load_campaign_log, run_campaign, Campaign, CampaignConfig, CampaignStatus, LogEvent};
pub use response::parse_pass_response;
pub use template::{
    first_prompt_overhead, render_first_prompt, render_followup_prompt, render_map, FIRST_PASS, FOLLOWUP_PASS,
    OUTPUT_CONTRACT,
};

/// Epistemic severity, ordered `Curious < Notable < Concerning < Alarming`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScourSeverity {
    Curious,
    Notable,
    Concerning,
    Alarming,
}

impl ScourSeverity {
    pub const ALL: [ScourSeverity; 4] = [
        ScourSeverity::Curious,
        ScourSeverity::Notable,
        ScourSeverity::Concerning,
        ScourSeverity::Alarming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScourSeverity::Curious => "curious",
            ScourSeverity::Notable => "notable",
            ScourSeverity::Concerning => "concerning",
            ScourSeverity::Alarming => "alarming",
        }
    }
}

impl FromStr for ScourSeverity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim().to_ascii_lowercase();
        ScourSeverity::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
    }
}

impl fmt::Display for ScourSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A 1-based inclusive line range in the target prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRef {
    pub start: usize,
    pub end: usize,
}

impl LineRef {
    /// Accepts `L12`, `L12-30`, `12-30`, `12`, and `L12-L30`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let num = |p: &str| p.trim().trim_start_matches(['L', 'l']).parse::<usize>().ok();
        let (start, end) = match s.split_once('-') {
            Some((a, b)) => (num(a)?, num(b)?),
            None => (num(s)?, num(s)?),
        };
        (start >= 1 && end >= start).then_some(Self { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScourFinding {
    pub id: String,
    pub pass_index: usize,
    pub model_id: String,
    pub category: String,
    pub severity: ScourSeverity,
    pub title: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<LineRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassReport {
    pub pass_index: usize,
    pub model_id: String,
    pub findings: Vec<ScourFinding>,
    pub unexplored: Vec<String>,
    pub should_send_another: bool,
    /// `(prompt_tokens, completion_tokens)`, re-asks included.
    pub usage: (u64, u64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScourError {
    #[error("target prompt is empty")]
    EmptyTarget,
    #[error("follow-up prompt needs at least one prior pass; use the first-pass template")]
    NoPriorPasses,
    #[error("malformed pass response: {message}")]
    Malformed { message: String, raw: String },
    #[error("invalid campaign configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// True iff at least `k` passes exist and the last `k` all voted no.
pub fn check_convergence(passes: &[PassReport], k: usize) -> bool {
    converged_votes(passes.iter().map(|p| p.should_send_another), k)
}

pub(crate) fn converged_votes(votes: impl IntoIterator<Item = bool>, k: usize) -> bool {
    let mut trailing_no = 0usize;
    for send_another in votes {
        trailing_no = if send_another { 0 } else { trailing_no + 1 };
    }
    k >= 1 && trailing_no >= k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_examples() {
        let v = |s: &[bool]| s.to_vec();
        let claude = v(&[true, true, true, true, true, true, true, false, false, false]);
        assert!(converged_votes(claude.clone(), 3));
        assert!(!converged_votes(claude[..9].to_vec(), 3));
        assert!(!converged_votes(v(&[false, false, true, false, false]), 3));
        assert!(converged_votes(v(&[false]), 1));
        assert!(!converged_votes(v(&[]), 1));
    }

    #[test]
    fn line_refs() {
        assert_eq!(LineRef::parse("L12-30"), Some(LineRef { start: 12, end: 30 }));
        assert_eq!(LineRef::parse("7"), Some(LineRef { start: 7, end: 7 }));
        assert_eq!(LineRef::parse("L3-L4"), Some(LineRef { start: 3, end: 4 }));
        assert_eq!(LineRef::parse("the tools section"), None);
        assert_eq!(LineRef::parse("9-2"), None);
    }

    #[test]
    fn first_prompt_contains_template_and_target_once() {
        let target = "You are a coding agent.\nNEVER push to main.";
        let p = render_first_prompt(target).unwrap();
        assert!(p.contains("Trust your judgment."));
        assert_eq!(p.matches(target).count(), 1);
        assert_eq!(p.len(), first_prompt_overhead() + target.len());
        assert_eq!(render_first_prompt("  \n"), Err(ScourError::EmptyTarget));
    }

    #[test]
    fn large_target_is_not_truncated() {
        let target = "x".repeat(1 << 20);
        let p = render_first_prompt(&target).unwrap();
        assert_eq!(p.len(), first_prompt_overhead() + target.len());
    }

    fn report(pass: usize, titles: &[&str], vote: bool) -> PassReport {
        PassReport {
            pass_index: pass,
            model_id: format!("m{pass}"),
            findings: titles
                .iter()
                .enumerate()
                .map(|(i, t)| ScourFinding {
                    id: format!("p{pass}-f{}", i + 1),
                    pass_index: pass,
                    model_id: format!("m{pass}"),
                    category: "structure".into(),
                    severity: ScourSeverity::Notable,
                    title: t.to_string(),
                    description: String::new(),
                    location: None,
                })
                .collect(),
            unexplored: vec![format!("runtime behavior after pass {pass}")],
            should_send_another: vote,
            usage: (0, 0),
        }
    }

    #[test]
    fn followup_embeds_map() {
        let prior = [report(1, &["Dual TodoWrite mandate", "Emoji rule restated"], true)];
        let p = render_followup_prompt("target text", &prior).unwrap();
        assert!(p.contains("Dual TodoWrite mandate"));
        assert!(p.contains("Emoji rule restated"));
        assert!(p.contains("runtime behavior after pass 1"));
        assert!(p.contains("It is better to say \"enough\" than to pad findings."));
        assert!(!p.contains(template::MAP_SLOT));
        assert_eq!(render_followup_prompt("t", &[]), Err(ScourError::NoPriorPasses));
    }

    #[test]
    fn followup_grows_with_passes() {
        let passes: Vec<_> = (1..=5).map(|i| report(i, &["a finding", "another"], true)).collect();
        let lens: Vec<_> = (1..=5).map(|n| render_followup_prompt("t", &passes[..n]).unwrap().len()).collect();
        assert!(lens.windows(2).all(|w| w[0] < w[1]), "{lens:?}");
    }

    const WELL_FORMED: &str = "Some commentary first.\n```json\n{\"findings\": [\
{\"title\": \"A\", \"category\": \"contradiction\", \"severity\": \"alarming\", \"description\": \"d\", \"location\": \"L10-12\"},\
{\"title\": \"B\", \"category\": \"redundancy\", \"severity\": \"Curious\"},\
{\"title\": \"C\", \"category\": \"scope\", \"severity\": \"notable\", \"location\": \"somewhere\"}],\
\"unexplored\": [\"hooks\"], \"should_send_another\": true}\n```";

    #[test]
    fn parses_well_formed_response() {
        let r = parse_pass_response(WELL_FORMED, 2, "m").unwrap();
        assert_eq!(r.findings.len(), 3);
        assert!(r.should_send_another);
        assert_eq!(r.findings[0].id, "p2-f1");
        assert_eq!(r.findings[0].location, Some(LineRef { start: 10, end: 12 }));
        assert_eq!(r.findings[1].severity, ScourSeverity::Curious);
        assert_eq!(r.findings[2].location, None);
        assert!(r.findings.iter().all(|f| f.pass_index == 2));
    }

    #[test]
    fn rejects_unknown_severity_and_missing_vote() {
        let bad = WELL_FORMED.replace("alarming", "catastrophic");
        assert!(matches!(parse_pass_response(&bad, 1, "m"), Err(ScourError::Malformed { .. })));
        let no_vote = "```json\n{\"findings\": [], \"unexplored\": []}\n```";
        match parse_pass_response(no_vote, 1, "m") {
            Err(ScourError::Malformed { raw, .. }) => assert_eq!(raw, no_vote),
            other => panic!("{other:?}"),
        }
    }
}
