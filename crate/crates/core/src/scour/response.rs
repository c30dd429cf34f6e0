use serde::Deserialize;

use crate::text::extract_fenced_block;

use super::{LineRef, PassReport, ScourError, ScourFinding, ScourSeverity};

#[derive(Deserialize)]
struct WirePass {
    #[serde(default)]
    findings: Vec<WireFinding>,
    #[serde(default)]
    unexplored: Vec<String>,
    should_send_another: Option<bool>,
}

#[derive(Deserialize)]
struct WireFinding {
    title: String,
    #[serde(default)]
    category: String,
    severity: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    location: Option<String>,
}

/// Parses the structured block at the end of a pass response. Finding ids
/// are `p{pass}-f{n}`, numbered from 1 in response order.
pub fn parse_pass_response(raw: &str, pass_index: usize, model_id: &str) -> Result<PassReport, ScourError> {
    let malformed = |message: String| ScourError::Malformed {
        message,
        raw: raw.to_string(),
    };
    let wire: WirePass = serde_json::from_str(extract_fenced_block(raw)).map_err(|e| malformed(e.to_string()))?;
    let vote = wire
        .should_send_another
        .ok_or_else(|| malformed("missing boolean `should_send_another`".into()))?;
    let findings = wire
        .findings
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let severity: ScourSeverity = f
                .severity
                .parse()
                .map_err(|_| malformed(format!("finding {}: unknown severity {:?}", i + 1, f.severity)))?;
            Ok(ScourFinding {
                id: format!("p{pass_index}-f{}", i + 1),
                pass_index,
                model_id: model_id.to_string(),
                category: f.category.trim().to_string(),
                severity,
                title: f.title.trim().to_string(),
                description: f.description,
                location: f.location.as_deref().and_then(LineRef::parse),
            })
        })
        .collect::<Result<Vec<_>, ScourError>>()?;
    Ok(PassReport {
        pass_index,
        model_id: model_id.to_string(),
        findings,
        unexplored: wire.unexplored,
        should_send_another: vote,
        usage: (0, 0),
    })
}
