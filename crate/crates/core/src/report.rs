//! Aggregations over campaigns, findings, patterns and cost ledgers, with
//! aligned text tables for people and versioned JSON for machines.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ledger_totals, CostRecord, LedgerTotals};
use crate::rules::{ImpactSeverity, InterferencePattern};
use crate::scour::{Campaign, CampaignStatus, ScourFinding, ScourSeverity};

pub const REPORT_SCHEMA: &str = "promptlens-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityScale {
    /// Scourer confidence: curious, notable, concerning, alarming.
    Epistemic,
    /// Directed impact: critical, major, minor.
    Impact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeverityLevel {
    Epistemic(ScourSeverity),
    Impact(ImpactSeverity),
}

impl SeverityLevel {
    pub fn scale(self) -> SeverityScale {
        match self {
            SeverityLevel::Epistemic(_) => SeverityScale::Epistemic,
            SeverityLevel::Impact(_) => SeverityScale::Impact,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SeverityLevel::Epistemic(s) => s.as_str(),
            SeverityLevel::Impact(s) => s.as_str(),
        }
    }
}

impl From<ScourSeverity> for SeverityLevel {
    fn from(s: ScourSeverity) -> Self {
        SeverityLevel::Epistemic(s)
    }
}

impl From<ImpactSeverity> for SeverityLevel {
    fn from(s: ImpactSeverity) -> Self {
        SeverityLevel::Impact(s)
    }
}

impl SeverityScale {
    /// Display order: epistemic ascending, impact descending.
    pub fn levels(self) -> Vec<SeverityLevel> {
        match self {
            SeverityScale::Epistemic => ScourSeverity::ALL.into_iter().map(Into::into).collect(),
            SeverityScale::Impact => ImpactSeverity::ALL.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReportError {
    #[error("severity {level} is not on the {expected:?} scale")]
    ScaleMismatch { expected: SeverityScale, level: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityRow {
    pub level: String,
    pub count: usize,
    pub percent: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityDistribution {
    pub scale: SeverityScale,
    pub rows: Vec<SeverityRow>,
    pub total: usize,
}

impl SeverityDistribution {
    pub fn count(&self, level: &str) -> usize {
        self.rows.iter().find(|r| r.level == level).map_or(0, |r| r.count)
    }

    pub fn percent(&self, level: &str) -> u32 {
        self.rows.iter().find(|r| r.level == level).map_or(0, |r| r.percent)
    }
}

/// Integer percentages summing to exactly 100 (0 for an all-zero input).
/// Leftover points go to the largest fractional parts; ties go to the
/// earlier entry.
pub fn largest_remainder(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut out: Vec<u32> = counts.iter().map(|c| (c * 100 / total) as u32).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // Remainders compared as exact integers: (c * 100) mod total.
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i] * 100 % total));
    let short = 100 - out.iter().sum::<u32>();
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

pub fn severity_distribution(
    scale: SeverityScale,
    findings: impl IntoIterator<Item = SeverityLevel>,
) -> Result<SeverityDistribution, ReportError> {
    let levels = scale.levels();
    let mut counts = vec![0usize; levels.len()];
    for level in findings {
        if level.scale() != scale {
            return Err(ReportError::ScaleMismatch { expected: scale, level: level.as_str() });
        }
        let i = levels.iter().position(|l| *l == level).expect("level on scale");
        counts[i] += 1;
    }
    let percents = largest_remainder(&counts);
    Ok(SeverityDistribution {
        scale,
        rows: levels
            .iter()
            .zip(counts.iter().zip(percents))
            .map(|(l, (&count, percent))| SeverityRow { level: l.as_str().to_string(), count, percent })
            .collect(),
        total: counts.iter().sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub pass: usize,
    pub model_id: String,
    pub new: usize,
    pub cumulative: usize,
    pub send_another: bool,
}

pub fn convergence_table(campaign: &Campaign) -> Vec<ConvergenceRow> {
    let mut cumulative = 0;
    campaign
        .passes
        .iter()
        .map(|p| {
            cumulative += p.findings.len();
            ConvergenceRow {
                pass: p.pass_index,
                model_id: p.model_id.clone(),
                new: p.findings.len(),
                cumulative,
                send_another: p.should_send_another,
            }
        })
        .collect()
}

/// Finding counts per (model, category). Models keep first-seen order;
/// categories are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    pub models: Vec<String>,
    pub categories: Vec<String>,
    pub cells: Vec<Vec<usize>>,
}

impl CoverageMatrix {
    pub fn get(&self, model: &str, category: &str) -> usize {
        let Some(r) = self.models.iter().position(|m| m == model) else { return 0 };
        let Ok(c) = self.categories.binary_search_by(|x| x.as_str().cmp(category)) else { return 0 };
        self.cells[r][c]
    }

    pub fn row_total(&self, model: &str) -> usize {
        self.models.iter().position(|m| m == model).map_or(0, |r| self.cells[r].iter().sum())
    }

    /// Categories found by exactly one model.
    pub fn exclusive_categories(&self) -> usize {
        (0..self.categories.len())
            .filter(|&c| self.cells.iter().filter(|row| row[c] > 0).count() == 1)
            .count()
    }
}

pub fn coverage_matrix<'a>(findings: impl IntoIterator<Item = &'a ScourFinding>) -> CoverageMatrix {
    let findings: Vec<&ScourFinding> = findings.into_iter().collect();
    let mut models: Vec<String> = Vec::new();
    for f in &findings {
        if !models.contains(&f.model_id) {
            models.push(f.model_id.clone());
        }
    }
    let categories: Vec<String> = findings
        .iter()
        .map(|f| f.category.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut cells = vec![vec![0; categories.len()]; models.len()];
    for f in &findings {
        let r = models.iter().position(|m| *m == f.model_id).expect("model indexed");
        let c = categories.binary_search(&f.category).expect("category indexed");
        cells[r][c] += 1;
    }
    CoverageMatrix { models, categories, cells }
}

/// Rounds currency for display: 3 places, halves away from zero.
pub fn round_currency(d: Decimal) -> Decimal {
    d.round_dp_with_strategy(3, RoundingStrategy::MidpointAwayFromZero)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub totals: LedgerTotals,
    pub finding_count: usize,
    /// Absent when there are no findings.
    pub cost_per_finding: Option<Decimal>,
}

pub fn cost_breakdown(records: &[CostRecord], finding_count: usize) -> CostBreakdown {
    let totals = ledger_totals(records);
    let cost_per_finding = (finding_count > 0).then(|| round_currency(totals.total / Decimal::from(finding_count)));
    CostBreakdown { totals, finding_count, cost_per_finding }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub total: usize,
    pub severity: SeverityDistribution,
    pub statically_detectable: usize,
    pub by_rule: BTreeMap<String, usize>,
}

pub fn pattern_summary(patterns: &[InterferencePattern]) -> PatternSummary {
    let severity = severity_distribution(SeverityScale::Impact, patterns.iter().map(|p| p.severity.into()))
        .expect("impact severities share one scale");
    let mut by_rule = BTreeMap::new();
    for p in patterns {
        *by_rule.entry(p.rule_id.clone()).or_insert(0) += 1;
    }
    PatternSummary {
        total: patterns.len(),
        severity,
        statically_detectable: patterns.iter().filter(|p| p.statically_detectable).count(),
        by_rule,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CampaignReport {
    pub target_id: String,
    pub status: CampaignStatus,
    pub threshold_k: usize,
    pub convergence: Vec<ConvergenceRow>,
    pub severity: SeverityDistribution,
    pub coverage: CoverageMatrix,
    pub findings: Vec<ScourFinding>,
}

pub fn campaign_report(campaign: &Campaign) -> CampaignReport {
    CampaignReport {
        target_id: campaign.target_id.clone(),
        status: campaign.status,
        threshold_k: campaign.threshold_k,
        convergence: convergence_table(campaign),
        severity: severity_distribution(SeverityScale::Epistemic, campaign.findings().map(|f| f.severity.into()))
            .expect("scourer severities share one scale"),
        coverage: coverage_matrix(campaign.findings()),
        findings: campaign.findings().cloned().collect(),
    }
}

/// Wraps a report body with the schema tag and a kind discriminator.
pub fn to_json<T: Serialize>(kind: &str, body: &T) -> String {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        schema: &'static str,
        kind: &'a str,
        report: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Envelope { schema: REPORT_SCHEMA, kind, report: body })
        .expect("report serializes");
    s.push('\n');
    s
}

/// Aligned plain-text table. Columns whose every cell parses as a number are
/// right-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let n = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(n) {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let numeric: Vec<bool> = (0..n)
        .map(|i| {
            !rows.is_empty()
                && rows.iter().all(|r| {
                    let c = r[i].trim_start_matches('$').trim_end_matches('%');
                    c.parse::<f64>().is_ok()
                })
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if numeric[i] {
                    format!("{c:>w$}", w = width[i])
                } else {
                    format!("{c:<w$}", w = width[i])
                }
            })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(headers.to_vec());
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl fmt::Display for SeverityDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.level.clone(), r.count.to_string(), format!("{}%", r.percent)])
            .collect();
        f.write_str(&render_table(&["Severity", "Count", "Share"], &rows))?;
        writeln!(f, "Total: {}", self.total)
    }
}

pub fn render_convergence(rows: &[ConvergenceRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.pass.to_string(),
                r.model_id.clone(),
                r.new.to_string(),
                r.cumulative.to_string(),
                yes_no(r.send_another).to_string(),
            ]
        })
        .collect();
    render_table(&["Pass", "Model", "New", "Cumulative", "Continue?"], &body)
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Campaign {} ({}, k={})", self.target_id, self.status.as_str(), self.threshold_k)?;
        writeln!(f)?;
        f.write_str(&render_convergence(&self.convergence))?;
        writeln!(f)?;
        write!(f, "{}", self.severity)?;
        writeln!(
            f,
            "Categories: {} unique over {} findings ({} found by one model only)",
            self.coverage.categories.len(),
            self.findings.len(),
            self.coverage.exclusive_categories()
        )
    }
}

impl fmt::Display for CostBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rows: Vec<Vec<String>> = self
            .totals
            .models
            .iter()
            .map(|m| vec![m.model_id.clone(), m.calls.to_string(), format!("${}", round_currency(m.cost))])
            .collect();
        rows.push(vec![
            "Total".into(),
            self.totals.calls.to_string(),
            format!("${}", round_currency(self.totals.total)),
        ]);
        f.write_str(&render_table(&["Model", "Calls", "Cost"], &rows))?;
        match self.cost_per_finding {
            Some(c) => writeln!(f, "Cost per finding ({} findings): ${c}", self.finding_count),
            None => writeln!(f, "Cost per finding: n/a (no findings)"),
        }
    }
}

pub fn render_patterns(patterns: &[InterferencePattern]) -> String {
    let rows: Vec<Vec<String>> = patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                (i + 1).to_string(),
                p.severity.as_str().to_string(),
                p.interference_type.clone(),
                format!("{} / {}", p.block_a, p.block_b),
                yes_no(p.statically_detectable).to_string(),
            ]
        })
        .collect();
    let mut out = render_table(&["#", "Severity", "Type", "Blocks", "Static"], &rows);
    let s = pattern_summary(patterns);
    let _ = writeln!(
        out,
        "{} patterns: {} critical, {} major, {} minor; {} statically detectable",
        s.total,
        s.severity.count("critical"),
        s.severity.count("major"),
        s.severity.count("minor"),
        s.statically_detectable
    );
    out
}
