use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CallId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostProvenance {
    /// Derived from the model's price table.
    Computed,
    /// Taken from the provider's billing data.
    Reported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub call_id: CallId,
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Decimal,
    pub provenance: CostProvenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_of: Option<CallId>,
}

/// Append-only, thread-safe list of cost records.
#[derive(Debug, Default)]
pub struct Ledger {
    records: Mutex<Vec<CostRecord>>,
    next_id: AtomicU64,
}

impl Ledger {
    pub fn next_call_id(&self) -> CallId {
        self.next_id.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn append(&self, record: CostRecord) {
        self.records.lock().expect("ledger lock").push(record);
    }

    pub fn records(&self) -> Vec<CostRecord> {
        self.records.lock().expect("ledger lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelTotal {
    pub model_id: String,
    pub calls: usize,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerTotals {
    /// Sorted by cost descending, then model id.
    pub models: Vec<ModelTotal>,
    pub calls: usize,
    pub total: Decimal,
}

pub fn ledger_totals(records: &[CostRecord]) -> LedgerTotals {
    let mut by_model: BTreeMap<&str, ModelTotal> = BTreeMap::new();
    for r in records {
        let entry = by_model.entry(&r.model_id).or_insert_with(|| ModelTotal {
            model_id: r.model_id.clone(),
            calls: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
            cost: Decimal::ZERO,
        });
        entry.calls += 1;
        entry.prompt_tokens += r.prompt_tokens;
        entry.completion_tokens += r.completion_tokens;
        entry.cost += r.cost;
    }
    let mut models: Vec<ModelTotal> = by_model.into_values().collect();
    models.sort_by(|a, b| b.cost.cmp(&a.cost).then_with(|| a.model_id.cmp(&b.model_id)));
    LedgerTotals {
        total: models.iter().map(|m| m.cost).sum(),
        calls: records.len(),
        models,
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// Reads a JSON-lines ledger. Blank lines and `#` comments are skipped.
pub fn load_ledger(path: &Path) -> Result<Vec<CostRecord>, LedgerError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(serde_json::from_str(t).map_err(|source| LedgerError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_ledger(path: &Path, records: &[CostRecord]) -> Result<(), LedgerError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(|source| LedgerError::Json { line: 0, source })?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
