//! A three-model scouring campaign against scripted models. Each pass sees
//! the findings of every earlier pass; the campaign stops once two
//! consecutive passes vote against sending another model.
//!
//! `cargo run --example scour_campaign`

use std::sync::Arc;

use promptlens::gateway::{BackendReply, ChatRequest, FnBackend, Gateway, ModelSpec};
use promptlens::report::{campaign_report, coverage_matrix};
use promptlens::scour::{run_campaign, CampaignConfig, LogEvent};

const TARGET: &str = "\
# Tools
- Use the edit tool for all file changes.
- Prefer shell commands for bulk renames.

# Safety
NEVER modify files outside the workspace.
";

fn reply(findings: &[(&str, &str, &str)], another: bool) -> String {
    let findings: Vec<_> = findings
        .iter()
        .map(|(category, severity, location)| {
            serde_json::json!({
                "title": category,
                "category": category,
                "severity": severity,
                "description": format!("{category} between the tool rules"),
                "location": location,
            })
        })
        .collect();
    let body = serde_json::json!({"findings": findings, "unexplored": ["tool result handling"], "should_send_another": another});
    format!("```json\n{body}\n```")
}

fn main() {
    let backend = FnBackend(|spec: &ModelSpec, req: &ChatRequest| {
        let seen_map = req.messages[0].content.contains("tool overlap");
        let text = match spec.model_id.as_str() {
            "scout-a" => reply(&[("tool overlap", "concerning", "L2-3"), ("scope ambiguity", "notable", "L6")], true),
            "scout-b" => {
                assert!(seen_map, "second pass receives the first pass's findings");
                reply(&[("bulk edit bypasses review", "alarming", "L3")], false)
            }
            _ => reply(&[("workspace boundary undefined", "curious", "L6")], false),
        };
        Ok(BackendReply::text(text, 900, 120))
    });
    let roster = vec!["scout-a".to_string(), "scout-b".to_string(), "scout-c".to_string()];
    let gateway = Gateway::new(Arc::new(backend), roster.iter().map(ModelSpec::free));
    let config = CampaignConfig { k: 2, ..CampaignConfig::new("demo-agent", roster) };

    let campaign = run_campaign(TARGET, &config, &gateway, &mut |event| match event {
        LogEvent::Prompt { pass, model_id, .. } => eprintln!("pass {pass}: asking {model_id}"),
        LogEvent::Status { status, .. } => eprintln!("stopped: {}", status.as_str()),
        _ => {}
    })
    .expect("campaign runs");

    print!("{}", campaign_report(&campaign));
    let matrix = coverage_matrix(campaign.findings());
    println!("\nmodels x categories:");
    for m in &matrix.models {
        println!("  {m}: {} findings", matrix.row_total(m));
    }
}
