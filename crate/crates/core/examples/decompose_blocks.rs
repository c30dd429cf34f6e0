//! Decomposes a prompt into classified blocks with a model. The scripted
//! model first answers in prose, gets re-asked once, then returns the
//! structured form, which is validated and written as a blocks file.
//!
//! `cargo run --example decompose_blocks`

use std::sync::Arc;

use promptlens::ast::parse;
use promptlens::blocks::{decompose_with_llm, serialize_blocks};
use promptlens::gateway::{Gateway, ModelSpec, ScriptStep, ScriptedBackend};

const PROMPT: &str = "\
You are a coding agent working in a terminal.

# Git
NEVER force-push to main.
Prefer small commits with clear messages.
";

fn main() {
    let doc = parse(PROMPT);
    let structured = serde_json::json!({"blocks": [
        {"id": "identity", "tier": "system", "category": "identity", "modality": "information",
         "scope": ["identity"], "start_line": 1, "end_line": 1, "text": "You are a coding agent working in a terminal."},
        {"id": "no-force-push", "tier": "domain", "category": "git", "modality": "prohibition",
         "scope": ["git", "push"], "start_line": 4, "end_line": 4, "text": "NEVER force-push to main."},
        {"id": "small-commits", "tier": "domain", "category": "git", "modality": "guidance",
         "scope": ["git", "commit"], "start_line": 5, "end_line": 5, "text": "Prefer small commits with clear messages."},
    ]});
    let backend = ScriptedBackend::new([
        ScriptStep::reply("The prompt has an identity line and two git rules.", 400, 20),
        ScriptStep::reply(format!("```json\n{structured}\n```"), 480, 200),
    ]);
    let gateway = Gateway::new(Arc::new(backend), [ModelSpec::free("judge")]);
    let set = decompose_with_llm(&doc.root, "demo-agent@1", &gateway, "judge").expect("valid decomposition");
    print!("{}", serialize_blocks(&set));
    println!("# {} model calls", gateway.ledger().len());
}
