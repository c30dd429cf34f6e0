use std::collections::BTreeSet;

use crate::blocks::{scope_overlap, Block};
use crate::text::{normalize_ws, MarkerLexicon};

use super::{DetectionMode, EvalError, InterferencePattern, Provenance, Rule, StructuralCheck};

/// Runs the rule's structural predicate. For hybrid rules the result is a
/// candidate that still needs model confirmation.
pub fn eval_structural(rule: &Rule, a: &Block, b: &Block) -> Result<Option<InterferencePattern>, EvalError> {
    let check = match (rule.mode, rule.check) {
        (DetectionMode::Structural | DetectionMode::Hybrid, Some(c)) => c,
        _ => return Err(EvalError::Mode { rule_id: rule.id.clone() }),
    };
    let rationale = match check {
        StructuralCheck::SharedActionToken => shared_action_token(rule, a, b),
        StructuralCheck::PriorityMarkers => priority_markers(a, b),
        StructuralCheck::VerbatimDuplicate => verbatim_duplicate(rule, a, b),
    };
    Ok(rationale.map(|rationale| InterferencePattern {
        rule_id: rule.id.clone(),
        interference_type: rule.interference_type.clone(),
        block_a: a.id.clone(),
        block_b: b.id.clone(),
        severity: rule.max_severity,
        rationale,
        statically_detectable: true,
        detection_provenance: Provenance::Structural,
    }))
}

fn shared_action_token(rule: &Rule, a: &Block, b: &Block) -> Option<String> {
    let hard_pair = a.modality.is_hard() && b.modality.is_hard() && a.modality != b.modality;
    if !hard_pair || scope_overlap(a, b).is_empty() {
        return None;
    }
    let ta = action_tokens(&a.text, rule.min_token_chars);
    let tb = action_tokens(&b.text, rule.min_token_chars);
    let shared: Vec<&str> = ta.intersection(&tb).copied().collect();
    if shared.is_empty() {
        return None;
    }
    Some(format!(
        "{} and {} both name {}",
        a.modality,
        b.modality,
        shared.iter().map(|t| format!("`{t}`")).collect::<Vec<_>>().join(", ")
    ))
}

/// Capitalized, not all-caps, at least `min_chars` long, and not the first
/// word of a sentence.
pub(crate) fn action_tokens(text: &str, min_chars: usize) -> BTreeSet<&str> {
    let mut out = BTreeSet::new();
    let mut sentence_start = true;
    let mut word_start: Option<usize> = None;
    let mut initial_for_word = true;
    for (i, c) in text.char_indices() {
        let in_word = c.is_alphanumeric() || c == '_';
        match (in_word, word_start) {
            (true, None) => {
                word_start = Some(i);
                initial_for_word = sentence_start;
                sentence_start = false;
            }
            (false, Some(s)) => {
                if !initial_for_word {
                    keep_action_token(&text[s..i], min_chars, &mut out);
                }
                word_start = None;
            }
            _ => {}
        }
        if !in_word && matches!(c, '.' | '!' | '?' | ':' | '\n') {
            sentence_start = true;
        }
    }
    if let Some(s) = word_start {
        if !initial_for_word {
            keep_action_token(&text[s..], min_chars, &mut out);
        }
    }
    out
}

fn keep_action_token<'a>(w: &'a str, min_chars: usize, out: &mut BTreeSet<&'a str>) {
    let first_upper = w.chars().next().is_some_and(char::is_uppercase);
    let all_caps = w.chars().all(|c| !c.is_lowercase());
    if first_upper && !all_caps && w.chars().count() >= min_chars {
        out.insert(w);
    }
}

fn priority_markers(a: &Block, b: &Block) -> Option<String> {
    let shared = scope_overlap(a, b);
    if shared.is_empty() || a.tier != b.tier {
        return None;
    }
    let markers = MarkerLexicon::default();
    if !markers.contains_marker(&a.text) || !markers.contains_marker(&b.text) {
        return None;
    }
    Some(format!(
        "both blocks carry priority markers at {} tier over {}",
        a.tier,
        shared.into_iter().collect::<Vec<_>>().join(", ")
    ))
}

fn verbatim_duplicate(rule: &Rule, a: &Block, b: &Block) -> Option<String> {
    let na = normalize_ws(&a.text);
    let len = na.chars().count();
    (len >= rule.min_text_chars && na == normalize_ws(&b.text)).then(|| format!("identical text ({len} chars)"))
}
