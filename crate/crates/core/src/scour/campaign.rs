use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatMessage, ChatRequest, Gateway};

use super::{
    check_convergence, parse_pass_response, render_first_prompt, render_followup_prompt, PassReport, ScourError,
    ScourFinding,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub target_id: String,
    /// Pass `i` uses `roster[i - 1]`; ids must be distinct.
    pub roster: Vec<String>,
    /// Consecutive "no" votes required to stop.
    pub k: usize,
    pub max_passes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
}

impl CampaignConfig {
    pub fn new(target_id: impl Into<String>, roster: Vec<String>) -> Self {
        let max_passes = roster.len().max(1);
        Self {
            target_id: target_id.into(),
            roster,
            k: 3,
            max_passes,
            max_output_tokens: None,
        }
    }

    fn validate(&self) -> Result<(), ScourError> {
        if self.roster.is_empty() {
            return Err(ScourError::Config("roster is empty".into()));
        }
        if self.k == 0 {
            return Err(ScourError::Config("k must be at least 1".into()));
        }
        if self.max_passes == 0 {
            return Err(ScourError::Config("max_passes must be at least 1".into()));
        }
        for (i, id) in self.roster.iter().enumerate() {
            if self.roster[..i].contains(id) {
                return Err(ScourError::Config(format!("model {id:?} appears twice in the roster")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Converged,
    RosterExhausted,
    MaxPasses,
    /// A gateway failure or a twice-malformed response ended the run early.
    Aborted,
}

impl CampaignStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignStatus::Converged => "converged",
            CampaignStatus::RosterExhausted => "roster_exhausted",
            CampaignStatus::MaxPasses => "max_passes",
            CampaignStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub target_id: String,
    pub roster: Vec<String>,
    pub threshold_k: usize,
    pub passes: Vec<PassReport>,
    pub status: CampaignStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Campaign {
    pub fn findings(&self) -> impl Iterator<Item = &ScourFinding> {
        self.passes.iter().flat_map(|p| &p.findings)
    }

    pub fn total_findings(&self) -> usize {
        self.passes.iter().map(|p| p.findings.len()).sum()
    }
}

/// One line of the append-only campaign log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    CampaignStart { config: CampaignConfig },
    Prompt { pass: usize, model_id: String, attempt: u32, text: String },
    Response { pass: usize, model_id: String, attempt: u32, text: String, prompt_tokens: u64, completion_tokens: u64 },
    Report { report: PassReport },
    Status { status: CampaignStatus, passes: usize, findings: usize, #[serde(default, skip_serializing_if = "Option::is_none")] error: Option<String> },
}

/// Runs passes in sequence until convergence, roster exhaustion or
/// `max_passes`. Every prompt, response, report and the final status go to
/// `log` as they happen.
///
/// Gateway failures and twice-malformed responses do not return an error:
/// they end the campaign with status `aborted`, keeping completed passes.
pub fn run_campaign(
    target: &str,
    config: &CampaignConfig,
    gateway: &Gateway,
    log: &mut dyn FnMut(&LogEvent),
) -> Result<Campaign, ScourError> {
    config.validate()?;
    if target.trim().is_empty() {
        return Err(ScourError::EmptyTarget);
    }
    log(&LogEvent::CampaignStart { config: config.clone() });
    let mut passes: Vec<PassReport> = Vec::new();
    let mut error = None;
    let status = loop {
        if check_convergence(&passes, config.k) {
            break CampaignStatus::Converged;
        }
        if passes.len() == config.roster.len() {
            break CampaignStatus::RosterExhausted;
        }
        if passes.len() == config.max_passes {
            break CampaignStatus::MaxPasses;
        }
        let pass = passes.len() + 1;
        let model_id = &config.roster[pass - 1];
        match run_pass(target, pass, model_id, &passes, config, gateway, log) {
            Ok(report) => {
                log(&LogEvent::Report { report: report.clone() });
                passes.push(report);
            }
            Err(e) => {
                error = Some(format!("pass {pass} ({model_id}): {e}"));
                break CampaignStatus::Aborted;
            }
        }
    };
    let campaign = Campaign {
        target_id: config.target_id.clone(),
        roster: config.roster.clone(),
        threshold_k: config.k,
        passes,
        status,
        error,
    };
    log(&LogEvent::Status {
        status,
        passes: campaign.passes.len(),
        findings: campaign.total_findings(),
        error: campaign.error.clone(),
    });
    Ok(campaign)
}

fn run_pass(
    target: &str,
    pass: usize,
    model_id: &str,
    prior: &[PassReport],
    config: &CampaignConfig,
    gateway: &Gateway,
    log: &mut dyn FnMut(&LogEvent),
) -> Result<PassReport, ScourError> {
    let prompt = if prior.is_empty() {
        render_first_prompt(target)?
    } else {
        render_followup_prompt(target, prior)?
    };
    let mut request = ChatRequest::new(model_id, vec![ChatMessage::user(prompt.clone())]);
    request.max_output_tokens = config.max_output_tokens;
    log(&LogEvent::Prompt { pass, model_id: model_id.into(), attempt: 1, text: prompt });
    let first = gateway.complete(&request)?;
    log(&LogEvent::Response {
        pass,
        model_id: model_id.into(),
        attempt: 1,
        text: first.text.clone(),
        prompt_tokens: first.prompt_tokens,
        completion_tokens: first.completion_tokens,
    });
    let mut usage = (first.prompt_tokens, first.completion_tokens);
    let mut report = match parse_pass_response(&first.text, pass, model_id) {
        Ok(r) => r,
        Err(ScourError::Malformed { message, .. }) => {
            let reask = format!(
                "Your response could not be parsed ({message}). Reply again, ending with the fenced JSON block described above."
            );
            request.messages.push(ChatMessage::assistant(first.text.clone()));
            request.messages.push(ChatMessage::user(reask.clone()));
            log(&LogEvent::Prompt { pass, model_id: model_id.into(), attempt: 2, text: reask });
            let second = gateway.complete_linked(&request, Some(first.call_id))?;
            log(&LogEvent::Response {
                pass,
                model_id: model_id.into(),
                attempt: 2,
                text: second.text.clone(),
                prompt_tokens: second.prompt_tokens,
                completion_tokens: second.completion_tokens,
            });
            usage.0 += second.prompt_tokens;
            usage.1 += second.completion_tokens;
            parse_pass_response(&second.text, pass, model_id)?
        }
        Err(e) => return Err(e),
    };
    report.usage = usage;
    Ok(report)
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignLogError {
    #[error("campaign log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("campaign log line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("campaign log has no {0} event")]
    Missing(&'static str),
}

/// Rebuilds a campaign from its JSON-lines log.
pub fn load_campaign_log(path: &Path) -> Result<Campaign, CampaignLogError> {
    let file = std::fs::File::open(path)?;
    let mut config = None;
    let mut passes = Vec::new();
    let mut end = None;
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = serde_json::from_str(&line).map_err(|source| CampaignLogError::Json { line: i + 1, source })?;
        match event {
            LogEvent::CampaignStart { config: c } => config = Some(c),
            LogEvent::Report { report } => passes.push(report),
            LogEvent::Status { status, error, .. } => end = Some((status, error)),
            LogEvent::Prompt { .. } | LogEvent::Response { .. } => {}
        }
    }
    let config = config.ok_or(CampaignLogError::Missing("campaign_start"))?;
    let (status, error) = end.ok_or(CampaignLogError::Missing("status"))?;
    Ok(Campaign {
        target_id: config.target_id,
        roster: config.roster,
        threshold_k: config.k,
        passes,
        status,
        error,
    })
}
