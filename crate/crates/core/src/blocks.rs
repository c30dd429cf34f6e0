//! Classified prompt blocks, the unit of directed evaluation.
//!
//! # Annotation format
//!
//! ```text
//! promptlens-blocks/1
//! source = claude-code@2.1.50
//! # id | tier | category | modality | scope tags | span | text
//! todo-mandate | system | workflow | mandate | todowrite,tasks | 12-14 | ALWAYS use TodoWrite ...
//! ```
//!
//! The first non-comment line is the version header. `source = ...` is
//! required before the first record. Records have exactly seven
//! `|`-separated fields; the text field runs to the end of the line, so it
//! may itself contain `|`. Inside the text, `\n` is a newline and `\\` a
//! backslash. Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Node, NodeKind};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::text::{extract_fenced_block, normalize_ws};

pub const BLOCKS_FORMAT: &str = "promptlens-blocks/1";

/// Authority level. Ordered `Application < Domain < System`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Application,
    Domain,
    System,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Application => "application",
            Tier::Domain => "domain",
            Tier::System => "system",
        }
    }
}

impl FromStr for Tier {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "application" => Ok(Tier::Application),
            "domain" => Ok(Tier::Domain),
            "system" => Ok(Tier::System),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Mandate,
    Prohibition,
    Guidance,
    Information,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Mandate,
        Modality::Prohibition,
        Modality::Guidance,
        Modality::Information,
    ];

    pub fn is_hard(self) -> bool {
        matches!(self, Modality::Mandate | Modality::Prohibition)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Mandate => "mandate",
            Modality::Prohibition => "prohibition",
            Modality::Guidance => "guidance",
            Modality::Information => "information",
        }
    }
}

impl FromStr for Modality {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Modality::ALL.into_iter().find(|m| m.as_str() == s).ok_or(())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub tier: Tier,
    pub category: String,
    pub modality: Modality,
    pub scope: BTreeSet<String>,
    /// 1-based inclusive line range in the source prompt.
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockSet {
    pub source_id: String,
    pub blocks: Vec<Block>,
}

impl BlockSet {
    /// Checks every invariant and returns the set unchanged on success.
    pub fn validated(self) -> Result<Self, BlockError> {
        validate(&self.blocks, None)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.id == id)
    }
}

pub fn scope_overlap(a: &Block, b: &Block) -> BTreeSet<String> {
    a.scope.intersection(&b.scope).cloned().collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlockError {
    #[error("missing or unsupported header; expected {BLOCKS_FORMAT:?}")]
    Header,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("block {id:?}: duplicate id")]
    DuplicateId { id: String },
    #[error("block {id:?}: unknown tier {value:?}")]
    UnknownTier { id: String, value: String },
    #[error("block {id:?}: unknown modality {value:?}")]
    UnknownModality { id: String, value: String },
    #[error("block {id:?}: scope must be a non-empty set of lowercase tags")]
    BadScope { id: String },
    #[error("block {id:?}: invalid span {start}-{end}")]
    BadSpan { id: String, start: usize, end: usize },
    #[error("block {id:?}: span overlaps or precedes block {previous:?}")]
    Overlap { id: String, previous: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

fn valid_tag(tag: &str) -> bool {
    !tag.is_empty()
        && tag
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

/// `max_line` bounds spans when the source length is known.
fn validate(blocks: &[Block], max_line: Option<usize>) -> Result<(), BlockError> {
    let mut seen = HashSet::new();
    let mut previous: Option<&Block> = None;
    for b in blocks {
        if !seen.insert(b.id.as_str()) {
            return Err(BlockError::DuplicateId { id: b.id.clone() });
        }
        if b.scope.is_empty() || !b.scope.iter().all(|t| valid_tag(t)) {
            return Err(BlockError::BadScope { id: b.id.clone() });
        }
        if b.start_line == 0 || b.end_line < b.start_line || max_line.is_some_and(|m| b.end_line > m) {
            return Err(BlockError::BadSpan {
                id: b.id.clone(),
                start: b.start_line,
                end: b.end_line,
            });
        }
        if let Some(p) = previous {
            if b.start_line <= p.end_line {
                return Err(BlockError::Overlap {
                    id: b.id.clone(),
                    previous: p.id.clone(),
                });
            }
        }
        previous = Some(b);
    }
    Ok(())
}

pub fn load_blocks(path: &Path) -> Result<BlockSet, BlockError> {
    let text = std::fs::read_to_string(path).map_err(|e| BlockError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_blocks(&text)
}

pub fn parse_blocks(input: &str) -> Result<BlockSet, BlockError> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    match lines.next() {
        Some((_, h)) if h.trim() == BLOCKS_FORMAT => {}
        _ => return Err(BlockError::Header),
    }
    let mut source_id = None;
    let mut blocks = Vec::new();
    for (n, line) in lines {
        if source_id.is_none() {
            let value = line
                .split_once('=')
                .filter(|(k, _)| k.trim() == "source")
                .map(|(_, v)| v.trim().to_string());
            match value {
                Some(v) => {
                    source_id = Some(v);
                    continue;
                }
                None => {
                    return Err(BlockError::Syntax {
                        line: n,
                        message: "expected `source = <id>` before the first block".into(),
                    })
                }
            }
        }
        blocks.push(parse_record(n, line)?);
    }
    let set = BlockSet {
        source_id: source_id.unwrap_or_default(),
        blocks,
    };
    set.validated()
}

fn parse_record(n: usize, line: &str) -> Result<Block, BlockError> {
    let fields: Vec<&str> = line.splitn(7, '|').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(BlockError::Syntax {
            line: n,
            message: format!("expected 7 `|`-separated fields, found {}", fields.len()),
        });
    }
    let id = fields[0].to_string();
    if id.is_empty() {
        return Err(BlockError::Syntax {
            line: n,
            message: "empty block id".into(),
        });
    }
    let tier = fields[1].parse().map_err(|_| BlockError::UnknownTier {
        id: id.clone(),
        value: fields[1].into(),
    })?;
    let modality = fields[3].parse().map_err(|_| BlockError::UnknownModality {
        id: id.clone(),
        value: fields[3].into(),
    })?;
    let scope = fields[4]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect();
    let (start, end) = fields[5]
        .split_once('-')
        .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
        .ok_or_else(|| BlockError::Syntax {
            line: n,
            message: format!("bad span {:?}; expected START-END", fields[5]),
        })?;
    Ok(Block {
        id,
        tier,
        category: fields[2].to_string(),
        modality,
        scope,
        start_line: start,
        end_line: end,
        text: unescape(fields[6]),
    })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Writes the annotation format. Text is stored trimmed.
pub fn serialize_blocks(set: &BlockSet) -> String {
    let mut out = format!("{BLOCKS_FORMAT}\nsource = {}\n", set.source_id);
    for b in &set.blocks {
        let scope: Vec<&str> = b.scope.iter().map(String::as_str).collect();
        let _ = writeln!(
            out,
            "{} | {} | {} | {} | {} | {}-{} | {}",
            b.id,
            b.tier,
            b.category,
            b.modality,
            scope.join(","),
            b.start_line,
            b.end_line,
            escape(b.text.trim())
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("malformed decomposition response: {message}")]
    Malformed { message: String, raw: String },
    #[error("decomposition failed validation: {source}")]
    Invalid { source: BlockError, raw: String },
}

impl DecomposeError {
    /// The model output that caused the failure, kept for audit.
    pub fn raw(&self) -> Option<&str> {
        match self {
            DecomposeError::Malformed { raw, .. } | DecomposeError::Invalid { raw, .. } => Some(raw),
            DecomposeError::Gateway(_) => None,
        }
    }
}

#[derive(Deserialize)]
struct WireBlocks {
    blocks: Vec<WireBlock>,
}

#[derive(Deserialize)]
struct WireBlock {
    id: String,
    tier: String,
    category: String,
    modality: String,
    scope: Vec<String>,
    start_line: usize,
    end_line: usize,
    text: String,
}

const DECOMPOSE_INSTRUCTIONS: &str = "\
Decompose the system prompt below into contiguous blocks. Each block is one \
instruction unit and is classified by:
- tier: system, domain or application (who the rule speaks for)
- category: a short freeform label such as identity, security, tool-usage, workflow
- modality: mandate, prohibition, guidance or information
- scope: lowercase tags naming the topics or tools the block governs

The prompt is given as numbered segments. Blocks must not overlap and must be \
listed in line order.

Reply with a single fenced JSON block of the form:
```json
{\"blocks\": [{\"id\": \"b1\", \"tier\": \"system\", \"category\": \"identity\", \
\"modality\": \"information\", \"scope\": [\"identity\"], \"start_line\": 1, \
\"end_line\": 2, \"text\": \"...\"}]}
```";

/// The numbered segment listing the model sees: one line per node that
/// owns source lines.
pub fn render_segments(document: &Node) -> String {
    let mut out = String::new();
    for (_, node) in document.walk() {
        if node.kind == NodeKind::Document || node.text.is_empty() {
            continue;
        }
        // Containers own their heading line plus blank separators; show the heading only.
        let (first, last) = if node.is_leaf() {
            (node.span.start, node.span.end)
        } else {
            match node.owned_lines().first() {
                Some(&l) => (l, l),
                None => continue,
            }
        };
        let _ = writeln!(out, "L{first}-{last} [{}] {}", node.kind, normalize_ws(&node.text));
    }
    out
}

pub fn decompose_request(document: &Node, model_id: &str) -> ChatRequest {
    let prompt = format!("{DECOMPOSE_INSTRUCTIONS}\n\n<prompt>\n{}</prompt>", render_segments(document));
    ChatRequest::new(model_id, vec![ChatMessage::user(prompt)])
}

/// Asks a model to decompose `document`. One re-ask on unparseable output;
/// responses that parse but break a block invariant fail immediately.
pub fn decompose_with_llm(
    document: &Node,
    source_id: &str,
    gateway: &Gateway,
    model_id: &str,
) -> Result<BlockSet, DecomposeError> {
    let request = decompose_request(document, model_id);
    let first = gateway.complete(&request)?;
    let wire = match parse_wire(&first.text) {
        Ok(w) => w,
        Err(message) => {
            let mut retry = request.clone();
            retry.messages.push(ChatMessage::assistant(first.text.clone()));
            retry.messages.push(ChatMessage::user(format!(
                "Your reply could not be parsed ({message}). Reply again with only the fenced JSON block."
            )));
            let second = gateway.complete_linked(&retry, Some(first.call_id))?;
            parse_wire(&second.text).map_err(|message| DecomposeError::Malformed {
                message,
                raw: second.text.clone(),
            })?
        }
    };
    let raw = serde_json::to_string(&wire.1).unwrap_or_default();
    let blocks = wire
        .0
        .into_iter()
        .map(|w| {
            let tier = w.tier.parse().map_err(|_| BlockError::UnknownTier {
                id: w.id.clone(),
                value: w.tier.clone(),
            })?;
            let modality = w.modality.parse().map_err(|_| BlockError::UnknownModality {
                id: w.id.clone(),
                value: w.modality.clone(),
            })?;
            Ok(Block {
                id: w.id,
                tier,
                category: w.category,
                modality,
                scope: w.scope.into_iter().collect(),
                start_line: w.start_line,
                end_line: w.end_line,
                text: w.text,
            })
        })
        .collect::<Result<Vec<_>, BlockError>>()
        .map_err(|source| DecomposeError::Invalid { source, raw: raw.clone() })?;
    let max_line = (!document.span.is_empty()).then_some(document.span.end);
    validate(&blocks, max_line).map_err(|source| DecomposeError::Invalid { source, raw })?;
    Ok(BlockSet {
        source_id: source_id.to_string(),
        blocks,
    })
}

fn parse_wire(raw: &str) -> Result<(Vec<WireBlock>, serde_json::Value), String> {
    let body = extract_fenced_block(raw);
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let wire: WireBlocks = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    Ok((wire.blocks, value))
}
