use std::fmt::Write as _;

use super::{PassReport, ScourError};

/// First-pass exploration framing, sent verbatim.
pub const FIRST_PASS: &str = "\
You are exploring a system prompt. Not auditing it, not checking it against rules—just reading it carefully and noting what you find interesting.

\"Interesting\" is deliberately vague. Trust your judgment. You might notice: instructions that seem to contradict each other; rules stated multiple times in different places; implicit assumptions that aren't declared; surprising structural choices; scope ambiguities; things that would confuse a model trying to follow all instructions simultaneously; interactions between distant parts of the prompt; anything else that catches your attention.

After documenting what you found, document what you DIDN'T explore. What areas did you skim? What questions occurred to you that you didn't pursue?

Finally: should we send another explorer after you? Would another pass, armed with your map, find things you missed?";

/// Follow-up framing. The map of prior passes replaces [`MAP_SLOT`].
pub const FOLLOWUP_PASS: &str = "\
You are exploring a system prompt. Previous explorers have already been through it and left you their map. Your job is to go where they didn't.

DO NOT repeat their findings. They found what they found. You are looking for what they missed, what they flagged as unexplored, and anything their framing caused them to overlook.

[Previous findings and unexplored territory injected here]

Be honest about diminishing returns. Set should_send_another to FALSE if: most of your findings are refinements or restatements of existing ones; the unexplored territory is mostly about runtime behavior; you found fewer than 3 genuinely new findings; the prior passes have already covered the major structural, security, operational, and semantic categories.

It is better to say \"enough\" than to pad findings.";

pub const MAP_SLOT: &str = "[Previous findings and unexplored territory injected here]";

/// Structured-output contract appended to every pass prompt.
pub const OUTPUT_CONTRACT: &str = "\
End your response with a single fenced JSON block. Text before it is kept as commentary; only the block is parsed.
```json
{
  \"findings\": [
    {\"title\": \"short name\", \"category\": \"your own label\", \"severity\": \"curious | notable | concerning | alarming\", \"description\": \"what you noticed\", \"location\": \"L120-134\"}
  ],
  \"unexplored\": [\"an area you skimmed or a question you did not pursue\"],
  \"should_send_another\": true
}
```
Severity: curious = pattern noticed; notable = worth investigating; concerning = likely problematic; alarming = structurally guaranteed to cause failures. `location` is optional.";

const TARGET_OPEN: &str = "<system-prompt>\n";
const TARGET_CLOSE: &str = "\n</system-prompt>";

fn with_target(head: &str, target: &str) -> String {
    let mut out = String::with_capacity(head.len() + OUTPUT_CONTRACT.len() + target.len() + 64);
    out.push_str(head);
    out.push_str("\n\n");
    out.push_str(OUTPUT_CONTRACT);
    out.push_str("\n\n");
    out.push_str(TARGET_OPEN);
    out.push_str(target);
    out.push_str(TARGET_CLOSE);
    out
}

/// Characters the first-pass prompt adds around the target.
pub fn first_prompt_overhead() -> usize {
    FIRST_PASS.len() + OUTPUT_CONTRACT.len() + TARGET_OPEN.len() + TARGET_CLOSE.len() + 4
}

pub fn render_first_prompt(target: &str) -> Result<String, ScourError> {
    if target.trim().is_empty() {
        return Err(ScourError::EmptyTarget);
    }
    Ok(with_target(FIRST_PASS, target))
}

/// Renders every prior finding (title, category, severity) and every
/// unexplored note, in pass order.
pub fn render_map(prior: &[PassReport]) -> String {
    let mut out = String::from("Previous findings:\n");
    for pass in prior {
        for f in &pass.findings {
            let _ = writeln!(out, "- [pass {}, {}, {}] {}", pass.pass_index, f.severity, f.category, f.title);
        }
    }
    out.push_str("\nUnexplored territory:\n");
    for pass in prior {
        for note in &pass.unexplored {
            let _ = writeln!(out, "- [pass {}] {}", pass.pass_index, note);
        }
    }
    out.truncate(out.trim_end().len());
    out
}

pub fn render_followup_prompt(target: &str, prior: &[PassReport]) -> Result<String, ScourError> {
    if target.trim().is_empty() {
        return Err(ScourError::EmptyTarget);
    }
    if prior.is_empty() {
        return Err(ScourError::NoPriorPasses);
    }
    Ok(with_target(&FOLLOWUP_PASS.replace(MAP_SLOT, &render_map(prior)), target))
}
