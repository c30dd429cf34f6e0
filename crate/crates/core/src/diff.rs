//! Node-level change classification between two prompt versions, and
//! channel-level variance across captured sessions.
//!
//! Matching runs in four passes over the non-root nodes of both trees:
//!
//! 1. **unchanged**: structural and content digests both equal;
//! 2. **moved**: content digest equal, structural digest different, paired
//!    greedily in old-document order, each node at most once;
//! 3. **modified**: structural digest equal, content digest different;
//! 4. everything left is **removed** (old) or **added** (new).
//!
//! The document root is excluded: it is always present on both sides and its
//! content digest changes with any edit anywhere.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotatedDocument, Channel};
use crate::ast::{Digest, Node, NodePath};

/// ChangeSet file format identifier.
pub const CHANGESET_FORMAT: &str = "promptlens-changeset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Removed,
    Modified,
    Moved,
    Unchanged,
}

impl fmt::Display for ChangeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChangeKind::Added => "added",
            ChangeKind::Removed => "removed",
            ChangeKind::Modified => "modified",
            ChangeKind::Moved => "moved",
            ChangeKind::Unchanged => "unchanged",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEntry {
    pub kind: ChangeKind,
    pub old: Option<NodePath>,
    pub new: Option<NodePath>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub added: usize,
    pub removed: usize,
    pub modified: usize,
    pub moved: usize,
    pub unchanged: usize,
}

impl ChangeSummary {
    pub fn get(&self, kind: ChangeKind) -> usize {
        match kind {
            ChangeKind::Added => self.added,
            ChangeKind::Removed => self.removed,
            ChangeKind::Modified => self.modified,
            ChangeKind::Moved => self.moved,
            ChangeKind::Unchanged => self.unchanged,
        }
    }

    fn bump(&mut self, kind: ChangeKind) {
        match kind {
            ChangeKind::Added => self.added += 1,
            ChangeKind::Removed => self.removed += 1,
            ChangeKind::Modified => self.modified += 1,
            ChangeKind::Moved => self.moved += 1,
            ChangeKind::Unchanged => self.unchanged += 1,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.added + self.removed + self.modified + self.moved == 0
    }
}

impl fmt::Display for ChangeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unchanged {}  modified {}  moved {}  added {}  removed {}",
            self.unchanged, self.modified, self.moved, self.added, self.removed
        )
    }
}

/// Entries are in old-document order, followed by additions in
/// new-document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub entries: Vec<ChangeEntry>,
    pub summary: ChangeSummary,
}

impl ChangeSet {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            format: &'static str,
            summary: &'a ChangeSummary,
            entries: &'a [ChangeEntry],
        }
        serde_json::to_string_pretty(&File {
            format: CHANGESET_FORMAT,
            summary: &self.summary,
            entries: &self.entries,
        })
        .expect("changeset serializes")
    }

    pub fn kind_of_old(&self, path: &NodePath) -> Option<ChangeKind> {
        self.entries
            .iter()
            .find(|e| e.old.as_ref() == Some(path))
            .map(|e| e.kind)
    }

    pub fn kind_of_new(&self, path: &NodePath) -> Option<ChangeKind> {
        self.entries
            .iter()
            .find(|e| e.new.as_ref() == Some(path))
            .map(|e| e.kind)
    }
}

struct Flat {
    path: NodePath,
    structural: Digest,
    content: Digest,
}

fn flatten(root: &Node) -> Vec<Flat> {
    root.walk()
        .filter(|(path, _)| path.depth() > 0)
        .map(|(path, n)| Flat {
            path,
            structural: n.structural_hash,
            content: n.content_hash,
        })
        .collect()
}

pub fn diff(old: &Node, new: &Node) -> ChangeSet {
    let old_nodes = flatten(old);
    let new_nodes = flatten(new);
    let mut old_match: Vec<Option<(usize, ChangeKind)>> = vec![None; old_nodes.len()];
    let mut new_taken = vec![false; new_nodes.len()];

    let by_structure: HashMap<Digest, usize> = new_nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.structural, i))
        .collect();

    for (oi, o) in old_nodes.iter().enumerate() {
        if let Some(&ni) = by_structure.get(&o.structural) {
            if !new_taken[ni] && new_nodes[ni].content == o.content {
                old_match[oi] = Some((ni, ChangeKind::Unchanged));
                new_taken[ni] = true;
            }
        }
    }

    let mut by_content: HashMap<Digest, VecDeque<usize>> = HashMap::new();
    for (ni, n) in new_nodes.iter().enumerate() {
        if !new_taken[ni] {
            by_content.entry(n.content).or_default().push_back(ni);
        }
    }
    for (oi, o) in old_nodes.iter().enumerate() {
        if old_match[oi].is_some() {
            continue;
        }
        if let Some(ni) = by_content.get_mut(&o.content).and_then(|q| q.pop_front()) {
            old_match[oi] = Some((ni, ChangeKind::Moved));
            new_taken[ni] = true;
        }
    }

    for (oi, o) in old_nodes.iter().enumerate() {
        if old_match[oi].is_some() {
            continue;
        }
        if let Some(&ni) = by_structure.get(&o.structural) {
            if !new_taken[ni] {
                old_match[oi] = Some((ni, ChangeKind::Modified));
                new_taken[ni] = true;
            }
        }
    }

    let mut entries = Vec::with_capacity(old_nodes.len() + new_nodes.len());
    let mut summary = ChangeSummary::default();
    for (oi, o) in old_nodes.iter().enumerate() {
        let entry = match old_match[oi] {
            Some((ni, kind)) => ChangeEntry {
                kind,
                old: Some(o.path.clone()),
                new: Some(new_nodes[ni].path.clone()),
            },
            None => ChangeEntry {
                kind: ChangeKind::Removed,
                old: Some(o.path.clone()),
                new: None,
            },
        };
        summary.bump(entry.kind);
        entries.push(entry);
    }
    for (ni, n) in new_nodes.iter().enumerate() {
        if !new_taken[ni] {
            summary.bump(ChangeKind::Added);
            entries.push(ChangeEntry {
                kind: ChangeKind::Added,
                old: None,
                new: Some(n.path.clone()),
            });
        }
    }
    ChangeSet { entries, summary }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VarianceError {
    #[error("session variance needs at least 2 sessions, got {0}")]
    Arity(usize),
}

/// Channels touched by any non-unchanged node when each session is diffed
/// against the first. An empty set means the prompt was invariant.
pub fn session_variance(
    sessions: &[AnnotatedDocument],
) -> Result<BTreeSet<Channel>, VarianceError> {
    if sessions.len() < 2 {
        return Err(VarianceError::Arity(sessions.len()));
    }
    let base = &sessions[0];
    let mut channels = BTreeSet::new();
    for other in &sessions[1..] {
        let changes = diff(&base.root, &other.root);
        for entry in changes.entries.iter().filter(|e| e.kind != ChangeKind::Unchanged) {
            if let Some(a) = entry.old.as_ref().and_then(|p| base.annotation(p)) {
                channels.insert(a.channel);
            }
            if let Some(a) = entry.new.as_ref().and_then(|p| other.annotation(p)) {
                channels.insert(a.channel);
            }
        }
    }
    Ok(channels)
}
