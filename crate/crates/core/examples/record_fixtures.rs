//! Regenerates the replay stores under `fixtures/`.
//!
//! Model answers come from two deterministic stand-ins recorded through the
//! real pipelines, so every stored digest matches what the library sends:
//!
//! * a labeler that answers rule prompts from `fixtures/blocks56/labels.toml`;
//! * a scripted scourer whose per-pass finding counts, votes and severity
//!   totals are fixed per campaign.
//!
//! Run from the crate root: `cargo run --example record_fixtures`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use promptlens::blocks::{load_blocks, Block, BlockSet};
use promptlens::config::DEFAULT_JUDGE_MODEL;
use promptlens::gateway::{BackendReply, ChatRequest, FnBackend, Gateway, ModelSpec, Recorder};
use promptlens::rules::{prefilter, render_rule_prompt, run_directed, RuleSet, RunOptions};
use promptlens::scour::{run_campaign, CampaignConfig, ScourSeverity};
use serde::Deserialize;

#[derive(Deserialize)]
struct Labels {
    pattern: Vec<Label>,
}

#[derive(Deserialize)]
struct Label {
    rule: String,
    a: String,
    b: String,
    severity: String,
    rationale: String,
}

fn tokens(s: &str) -> u64 {
    (s.len() as u64).div_ceil(4)
}

fn fresh_store(dir: &Path) {
    if dir.exists() {
        std::fs::remove_dir_all(dir).expect("clear replay store");
    }
}

/// Lays block texts out at their recorded spans; two-line blocks wrap at the
/// space nearest their midpoint.
fn render_prompt(set: &BlockSet) -> String {
    let last = set.blocks.iter().map(|b| b.end_line).max().unwrap_or(0);
    let mut lines = vec![String::new(); last];
    for b in &set.blocks {
        let text = b.text.trim();
        if b.start_line == b.end_line {
            lines[b.start_line - 1] = text.to_string();
        } else {
            let mid = text.len() / 2;
            let cut = text
                .match_indices(' ')
                .map(|(i, _)| i)
                .min_by_key(|i| i.abs_diff(mid))
                .expect("multi-line block has a space");
            lines[b.start_line - 1] = text[..cut].to_string();
            lines[b.end_line - 1] = text[cut + 1..].to_string();
        }
    }
    lines.join("\n") + "\n"
}

fn record_blocks56(root: &Path) {
    let dir = root.join("blocks56");
    let set = load_blocks(&dir.join("blocks.txt")).expect("blocks fixture");
    std::fs::write(dir.join("prompt.md"), render_prompt(&set)).expect("write prompt");

    let labels: Labels =
        toml::from_str(&std::fs::read_to_string(dir.join("labels.toml")).expect("labels")).expect("labels parse");
    let rules = RuleSet::builtin();
    let mut answers: HashMap<String, String> = HashMap::new();
    let mut used = vec![false; labels.pattern.len()];
    for rule in rules.rules.iter().filter(|r| r.uses_llm()) {
        for (a, b) in prefilter(&set, rule) {
            let prompt = render_rule_prompt(rule, a, b).expect("llm rule has a template");
            let hit = labels.pattern.iter().position(|l| {
                l.rule == rule.id && ((l.a == a.id && l.b == b.id) || (l.a == b.id && l.b == a.id))
            });
            let body = match hit {
                Some(i) => {
                    used[i] = true;
                    let l = &labels.pattern[i];
                    serde_json::json!({"interferes": true, "severity": l.severity, "rationale": l.rationale})
                }
                None => serde_json::json!({"interferes": false}),
            };
            answers.insert(prompt, format!("```json\n{body}\n```"));
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        let l = &labels.pattern[i];
        panic!("label {} {}/{} matches no pre-filtered pair", l.rule, l.a, l.b);
    }

    let labeler = FnBackend(move |_: &ModelSpec, req: &ChatRequest| {
        let prompt = &req.messages.last().expect("message").content;
        let text = answers.get(prompt).expect("every rule prompt is labeled").clone();
        Ok(BackendReply::text(text.clone(), tokens(prompt), tokens(&text)))
    });
    let store = dir.join("replay");
    fresh_store(&store);
    let recorder = Recorder::create(labeler, &store).expect("recorder");
    let gateway = Gateway::new(Arc::new(recorder), [ModelSpec::free(DEFAULT_JUDGE_MODEL)]);
    let run = run_directed(&set, &rules, &gateway, &RunOptions { model_id: DEFAULT_JUDGE_MODEL.into(), jobs: 1 });
    assert!(run.report.errors.is_empty(), "{:?}", run.report.errors);
    println!(
        "blocks56: {} patterns, {} recorded calls",
        run.patterns.len(),
        gateway.ledger().len()
    );
}

struct Script {
    dir: &'static str,
    target_id: &'static str,
    roster: &'static [&'static str],
    k: usize,
    new: &'static [usize],
    votes: &'static [bool],
    /// Totals in scale order: curious, notable, concerning, alarming.
    severity: [usize; 4],
    /// Finding indices (0-based) that reuse the category of the finding
    /// five places earlier.
    repeat_every: Option<usize>,
}

const LENSES: [&str; 12] = [
    "contradiction",
    "redundancy",
    "scope ambiguity",
    "implicit dependency",
    "priority ambiguity",
    "security surface",
    "operational risk",
    "format drift",
    "tool overlap",
    "meta-instruction",
    "unstated assumption",
    "escalation gap",
];

const UNEXPLORED: [&str; 4] = [
    "how the prompt interacts with tool results at runtime",
    "whether later sections are ever truncated",
    "ordering effects between distant sections",
    "behavior when the user contradicts a standing rule",
];

/// Spreads severity totals across findings so every prefix stays close to
/// the overall mix.
fn severity_sequence(totals: [usize; 4]) -> Vec<ScourSeverity> {
    let n: usize = totals.iter().sum();
    let mut given = [0usize; 4];
    (0..n)
        .map(|j| {
            let pick = (0..4)
                .filter(|&i| given[i] < totals[i])
                .max_by_key(|&i| (totals[i] * (j + 1)) as i64 * 4 - (given[i] * n) as i64 * 4 - i as i64)
                .expect("capacity left");
            given[pick] += 1;
            ScourSeverity::ALL[pick]
        })
        .collect()
}

/// Subjects a finding can point at: a label and an optional line range.
fn subjects(target: &str, blocks: Option<&BlockSet>) -> Vec<(String, Option<(usize, usize)>)> {
    match blocks {
        Some(set) => set.blocks.iter().map(|b: &Block| (b.id.clone(), Some((b.start_line, b.end_line)))).collect(),
        None => target
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let words: Vec<&str> = l.trim_start_matches(['#', '-', ' ', '*']).split_whitespace().take(4).collect();
                (words.join(" "), Some((i + 1, i + 1)))
            })
            .collect(),
    }
}

fn scripted_findings(script: &Script, subjects: &[(String, Option<(usize, usize)>)]) -> Vec<serde_json::Value> {
    let total: usize = script.new.iter().sum();
    let severities = severity_sequence(script.severity);
    assert_eq!(severities.len(), total, "{}: severity totals must match finding count", script.dir);
    let mut categories: Vec<String> = Vec::with_capacity(total);
    for j in 0..total {
        let reuse = script.repeat_every.is_some_and(|r| j % r == r - 1);
        let (subject, _) = &subjects[j % subjects.len()];
        let category = if reuse {
            categories[j - 5].clone()
        } else {
            format!("{}: {}", LENSES[j % LENSES.len()], subject)
        };
        categories.push(category);
    }
    (0..total)
        .map(|j| {
            let (subject, span) = &subjects[j % subjects.len()];
            let lens = LENSES[j % LENSES.len()];
            let mut v = serde_json::json!({
                "title": format!("{lens} around {subject}"),
                "category": categories[j],
                "severity": severities[j].as_str(),
                "description": format!("The instruction at {subject} shows a {lens} that a model following every rule at once would have to resolve on its own."),
            });
            if let Some((a, b)) = span {
                v["location"] = serde_json::json!(format!("L{a}-{b}"));
            }
            v
        })
        .collect()
}

fn record_campaign(root: &Path, script: &Script, blocks: Option<&BlockSet>) {
    let dir = root.join(script.dir);
    let target = std::fs::read_to_string(dir.join("target.md")).expect("target");
    let subjects = subjects(&target, blocks);
    let findings = scripted_findings(script, &subjects);
    let mut offsets = vec![0usize];
    for n in script.new {
        offsets.push(offsets.last().unwrap() + n);
    }
    let roster: Vec<String> = script.roster.iter().map(|s| s.to_string()).collect();
    let replies: Vec<String> = (0..script.new.len())
        .map(|p| {
            let body = serde_json::json!({
                "findings": findings[offsets[p]..offsets[p + 1]],
                "unexplored": [UNEXPLORED[p % UNEXPLORED.len()], UNEXPLORED[(p + 1) % UNEXPLORED.len()]],
                "should_send_another": script.votes[p],
            });
            format!(
                "I read the prompt end to end and noted what stood out.\n\n```json\n{}\n```\n",
                serde_json::to_string_pretty(&body).expect("json")
            )
        })
        .collect();
    let by_model: HashMap<String, String> = roster.iter().cloned().zip(replies).collect();
    let scourer = FnBackend(move |spec: &ModelSpec, req: &ChatRequest| {
        let text = by_model.get(&spec.model_id).expect("scripted model").clone();
        Ok(BackendReply::text(text.clone(), tokens(&req.messages[0].content), tokens(&text)))
    });

    let store = dir.join("replay");
    fresh_store(&store);
    let recorder = Recorder::create(scourer, &store).expect("recorder");
    let gateway = Gateway::new(Arc::new(recorder), roster.iter().map(ModelSpec::free));
    let config = CampaignConfig {
        target_id: script.target_id.into(),
        roster: roster.clone(),
        k: script.k,
        max_passes: roster.len(),
        max_output_tokens: None,
    };
    let campaign = run_campaign(&target, &config, &gateway, &mut |_| {}).expect("campaign");

    let mut toml = format!("target_id = {:?}\ntarget = \"target.md\"\nk = {}\nroster = [\n", script.target_id, script.k);
    for m in &roster {
        let _ = writeln!(toml, "    {m:?},");
    }
    toml.push_str("]\n");
    std::fs::write(dir.join("campaign.toml"), toml).expect("write campaign.toml");
    println!(
        "{}: {} passes, {} findings, {}",
        script.dir,
        campaign.passes.len(),
        campaign.total_findings(),
        campaign.status.as_str()
    );
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    record_blocks56(&root);

    let blocks = load_blocks(&root.join("blocks56/blocks.txt")).expect("blocks fixture");
    std::fs::copy(root.join("blocks56/prompt.md"), root.join("claude-campaign/target.md")).expect("copy target");
    let scripts = [
        Script {
            dir: "claude-campaign",
            target_id: "coding-agent@2.1.50",
            roster: &[
                "Claude Opus 4.6",
                "Gemini 2.0 Flash",
                "Kimi K2.5",
                "DeepSeek V3.2",
                "Grok 4.1",
                "Llama 4 Maverick",
                "MiniMax M2.5",
                "Qwen3-235B",
                "GLM 4.7",
                "GPT-OSS 120B",
            ],
            k: 3,
            new: &[21, 9, 14, 12, 10, 5, 20, 3, 14, 8],
            votes: &[true, true, true, true, true, true, true, false, false, false],
            severity: [34, 36, 34, 12],
            repeat_every: Some(12),
        },
        Script {
            dir: "codex-campaign",
            target_id: "sandboxed-agent",
            roster: &["DeepSeek V3.2", "Grok 4.1", "Kimi K2.5"],
            k: 1,
            new: &[10, 5],
            votes: &[true, false],
            severity: [3, 7, 5, 0],
            repeat_every: None,
        },
        Script {
            dir: "gemini-campaign",
            target_id: "cli-agent",
            roster: &["DeepSeek V3.2", "Qwen3-235B", "GLM 4.7", "Kimi K2.5"],
            k: 1,
            new: &[12, 5, 4],
            votes: &[true, true, false],
            severity: [4, 9, 6, 2],
            repeat_every: None,
        },
    ];
    for s in &scripts {
        record_campaign(&root, s, (s.dir == "claude-campaign").then_some(&blocks));
    }
}
