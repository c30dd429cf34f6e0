//! Typed structural tree for system prompts.
//!
//! A prompt parses into a single `document` root holding sections (nested by
//! heading level), paragraphs, directives, lists, code blocks and metadata
//! lines. Every node carries two digests:
//!
//! * a **structural hash** over `(kind, depth, sibling-index path)`, which
//!   never looks at text, and
//! * a **content hash** over the whitespace-normalized text of the node and
//!   its subtree, which never looks at position.
//!
//! Together they drive [`crate::diff`].

mod format;
mod hash;
mod parse;
mod profile;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use format::{from_json, to_json, AstFile, FormatError, AST_FORMAT};
pub use hash::{content_digest, structural_digest, Digest, HASH_ALGORITHM};
pub use parse::{parse, parse_bytes, parse_with, ParseError, ParseOptions};
pub use profile::{profile, StructuralProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Document,
    Section,
    Paragraph,
    Directive,
    List,
    ListItem,
    CodeBlock,
    Metadata,
}

impl NodeKind {
    pub const ALL: [NodeKind; 8] = [
        NodeKind::Document,
        NodeKind::Section,
        NodeKind::Paragraph,
        NodeKind::Directive,
        NodeKind::List,
        NodeKind::ListItem,
        NodeKind::CodeBlock,
        NodeKind::Metadata,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Document => "document",
            NodeKind::Section => "section",
            NodeKind::Paragraph => "paragraph",
            NodeKind::Directive => "directive",
            NodeKind::List => "list",
            NodeKind::ListItem => "list_item",
            NodeKind::CodeBlock => "code_block",
            NodeKind::Metadata => "metadata",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1-based inclusive line range. The empty document uses `0..=0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const EMPTY: Span = Span { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start == 0
    }

    pub fn contains_line(&self, line: usize) -> bool {
        !self.is_empty() && self.start <= line && line <= self.end
    }

    pub fn lines(&self) -> std::ops::RangeInclusive<usize> {
        if self.is_empty() {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        self.start..=self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}-{}", self.start, self.end)
    }
}

/// Sibling-index path from the root. The root itself is the empty path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn child(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        Self(v)
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("/")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_level: Option<u8>,
    pub text: String,
    pub depth: usize,
    pub sibling_index: usize,
    pub span: Span,
    pub structural_hash: Digest,
    pub content_hash: Digest,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Node>,
}

impl Node {
    pub fn structural_hash(&self) -> Digest {
        self.structural_hash
    }

    pub fn content_hash(&self) -> Digest {
        self.content_hash
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Looks up a descendant by sibling-index path.
    pub fn get(&self, path: &NodePath) -> Option<&Node> {
        let mut node = self;
        for &idx in &path.0 {
            node = node.children.get(idx)?;
        }
        Some(node)
    }

    /// Pre-order traversal yielding every node with its path.
    pub fn walk(&self) -> Walk<'_> {
        Walk {
            stack: vec![(self, NodePath::root())],
        }
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn node_count(&self) -> usize {
        self.walk().count()
    }

    /// Lines this node owns directly: every line in its span not covered by
    /// a child span. Headings own their heading lines; pure containers own
    /// nothing but blank separators.
    pub fn owned_lines(&self) -> Vec<usize> {
        self.span
            .lines()
            .filter(|line| !self.children.iter().any(|c| c.span.contains_line(*line)))
            .collect()
    }
}

pub struct Walk<'a> {
    stack: Vec<(&'a Node, NodePath)>,
}

impl<'a> Iterator for Walk<'a> {
    type Item = (NodePath, &'a Node);

    fn next(&mut self) -> Option<Self::Item> {
        let (node, path) = self.stack.pop()?;
        for (i, child) in node.children.iter().enumerate().rev() {
            self.stack.push((child, path.child(i)));
        }
        Some((path, node))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "warning: line {}: {}", self.line, self.message)
    }
}

/// Parse result: the document root plus any warnings raised on the way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub root: Node,
    pub diagnostics: Vec<Diagnostic>,
    pub line_count: usize,
}
