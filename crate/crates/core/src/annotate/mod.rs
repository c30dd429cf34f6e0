//! Semantic roles and channels for AST nodes.
//!
//! Role assignment precedence: the nearest enclosing section (a section
//! counts as enclosing itself) whose heading matches a role's heading
//! lexicon, then the node's own keywords, then `unclassified`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{Node, NodeKind, NodePath};
use crate::text::PhraseSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Identity,
    Policy,
    Safety,
    ToolUsage,
    Workflow,
    Format,
    MemoryPolicy,
    Environment,
    Meta,
    Unclassified,
}

impl Role {
    pub const ALL: [Role; 10] = [
        Role::Identity,
        Role::Policy,
        Role::Safety,
        Role::ToolUsage,
        Role::Workflow,
        Role::Format,
        Role::MemoryPolicy,
        Role::Environment,
        Role::Meta,
        Role::Unclassified,
    ];

    pub fn channel(self) -> Channel {
        match self {
            Role::ToolUsage => Channel::ToolSchema,
            Role::MemoryPolicy => Channel::Memory,
            Role::Environment => Channel::Environment,
            _ => Channel::Behavior,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Identity => "identity",
            Role::Policy => "policy",
            Role::Safety => "safety",
            Role::ToolUsage => "tool_usage",
            Role::Workflow => "workflow",
            Role::Format => "format",
            Role::MemoryPolicy => "memory_policy",
            Role::Environment => "environment",
            Role::Meta => "meta",
            Role::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Behavior,
    ToolSchema,
    Memory,
    Environment,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Behavior,
        Channel::ToolSchema,
        Channel::Memory,
        Channel::Environment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Behavior => "behavior",
            Channel::ToolSchema => "tool_schema",
            Channel::Memory => "memory",
            Channel::Environment => "environment",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which rule produced a role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Heading,
    Keyword,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub role: Role,
    pub channel: Channel,
    pub confidence: Confidence,
}

impl Annotation {
    fn new(role: Role, confidence: Confidence) -> Self {
        Self {
            role,
            channel: role.channel(),
            confidence,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatedDocument {
    pub root: Node,
    pub annotations: BTreeMap<NodePath, Annotation>,
}

impl AnnotatedDocument {
    pub fn annotation(&self, path: &NodePath) -> Option<&Annotation> {
        self.annotations.get(path)
    }

    pub fn role_counts(&self) -> BTreeMap<Role, usize> {
        let mut counts = BTreeMap::new();
        for a in self.annotations.values() {
            *counts.entry(a.role).or_default() += 1;
        }
        counts
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid lexicon: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported lexicon version {0}")]
    Version(u32),
    #[error("role `unclassified` cannot carry a lexicon")]
    Unclassified,
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    version: u32,
    roles: BTreeMap<Role, RoleEntry>,
}

#[derive(Debug, Deserialize)]
struct RoleEntry {
    #[serde(default = "yes")]
    case_insensitive: bool,
    #[serde(default)]
    headings: Vec<String>,
    #[serde(default)]
    keywords: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone)]
struct RoleLexicon {
    role: Role,
    headings: PhraseSet,
    keywords: PhraseSet,
}

/// Heading and keyword word lists per role.
#[derive(Debug, Clone)]
pub struct Lexicon {
    roles: Vec<RoleLexicon>,
}

const DEFAULT_LEXICON: &str = include_str!("default_lexicon.toml");

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_toml(s: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(s)?;
        if file.version != 1 {
            return Err(LexiconError::Version(file.version));
        }
        let mut roles = Vec::new();
        for (role, entry) in file.roles {
            if role == Role::Unclassified {
                return Err(LexiconError::Unclassified);
            }
            roles.push(RoleLexicon {
                role,
                headings: PhraseSet::new(&entry.headings, entry.case_insensitive),
                keywords: PhraseSet::new(&entry.keywords, entry.case_insensitive),
            });
        }
        roles.sort_by_key(|r| r.role);
        Ok(Self { roles })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let s = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&s)
    }

    /// Best heading role: most phrase hits, ties broken by role order.
    pub fn heading_role(&self, heading: &str) -> Option<Role> {
        best(self.roles.iter().map(|r| (r.role, r.headings.count_matches(heading))))
    }

    pub fn keyword_role(&self, text: &str) -> Option<Role> {
        best(self.roles.iter().map(|r| (r.role, r.keywords.count_matches(text))))
    }
}

fn best(scores: impl Iterator<Item = (Role, usize)>) -> Option<Role> {
    let mut winner: Option<(Role, usize)> = None;
    for (role, hits) in scores {
        if hits > 0 && winner.is_none_or(|(_, h)| hits > h) {
            winner = Some((role, hits));
        }
    }
    winner.map(|(r, _)| r)
}

pub fn annotate(document: &Node) -> AnnotatedDocument {
    annotate_with(document, &Lexicon::default())
}

pub fn annotate_with(document: &Node, lexicon: &Lexicon) -> AnnotatedDocument {
    let mut annotations = BTreeMap::new();
    visit(document, NodePath::root(), None, lexicon, &mut annotations);
    AnnotatedDocument {
        root: document.clone(),
        annotations,
    }
}

fn visit(
    node: &Node,
    path: NodePath,
    inherited: Option<Role>,
    lexicon: &Lexicon,
    out: &mut BTreeMap<NodePath, Annotation>,
) {
    let context = if node.kind == NodeKind::Section {
        lexicon.heading_role(&node.text).or(inherited)
    } else {
        inherited
    };
    let annotation = match context {
        Some(role) => Annotation::new(role, Confidence::Heading),
        None if node.kind == NodeKind::Document => {
            Annotation::new(Role::Unclassified, Confidence::Default)
        }
        None => match lexicon.keyword_role(&node.text) {
            Some(role) => Annotation::new(role, Confidence::Keyword),
            None => Annotation::new(Role::Unclassified, Confidence::Default),
        },
    };
    for (i, child) in node.children.iter().enumerate() {
        visit(child, path.child(i), context, lexicon, out);
    }
    out.insert(path, annotation);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDistribution {
    pub node_count: usize,
    pub fractions: BTreeMap<Channel, f64>,
    pub unclassified_fraction: f64,
}

impl ChannelDistribution {
    pub fn fraction(&self, channel: Channel) -> f64 {
        self.fractions.get(&channel).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistributionError {
    #[error("channel distribution is undefined for a document with no content nodes")]
    Undefined,
}

/// Channel shares over non-document nodes. Unclassified nodes land in the
/// behavior channel and are also reported on their own.
pub fn channel_distribution(
    annotated: &AnnotatedDocument,
) -> Result<ChannelDistribution, DistributionError> {
    let mut counts: BTreeMap<Channel, usize> = Channel::ALL.iter().map(|c| (*c, 0)).collect();
    let mut total = 0usize;
    let mut unclassified = 0usize;
    for (path, a) in &annotated.annotations {
        if path.depth() == 0 {
            continue;
        }
        total += 1;
        *counts.entry(a.channel).or_default() += 1;
        if a.role == Role::Unclassified {
            unclassified += 1;
        }
    }
    if total == 0 {
        return Err(DistributionError::Undefined);
    }
    let n = total as f64;
    Ok(ChannelDistribution {
        node_count: total,
        fractions: counts
            .into_iter()
            .map(|(c, k)| (c, k as f64 / n))
            .collect(),
        unclassified_fraction: unclassified as f64 / n,
    })
}
