//! Seeded random prompt documents and single-step mutations with the diff
//! classification each mutation must produce.
//!
//! Every leaf and heading carries a unique token, so no two nodes share a
//! content digest and moves are never ambiguous. Layout rules keep the
//! rendered markdown parsing back into exactly the generated tree: content
//! blocks precede subsections, lists are never adjacent siblings, metadata
//! only appears at the top of the document.

use std::collections::BTreeMap;

use promptlens::ast::{Node, NodeKind, NodePath};
use promptlens::diff::ChangeKind;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const WORDS: &[&str] = &[
    "use", "the", "tool", "files", "before", "editing", "prefer", "short", "answers", "run", "tests", "after",
    "changes", "keep", "output", "plain", "check", "paths", "read", "context", "ask", "user", "when", "unsure",
    "avoid", "guessing", "commit", "messages", "explain", "why", "search", "first",
];
const MARKERS: &[&str] = &["NEVER", "ALWAYS", "IMPORTANT:", "You MUST", "DO NOT"];

#[derive(Debug, Clone, PartialEq)]
pub struct GenNode {
    pub kind: NodeKind,
    pub level: Option<u8>,
    pub text: String,
    pub children: Vec<GenNode>,
}

impl GenNode {
    fn leaf(kind: NodeKind, text: String) -> Self {
        Self { kind, level: None, text, children: Vec::new() }
    }

    fn is_content_block(&self) -> bool {
        matches!(self.kind, NodeKind::Paragraph | NodeKind::Directive | NodeKind::List | NodeKind::CodeBlock)
    }

    pub fn get(&self, path: &[usize]) -> &GenNode {
        path.iter().fold(self, |n, &i| &n.children[i])
    }

    fn get_mut(&mut self, path: &[usize]) -> &mut GenNode {
        path.iter().fold(self, |n, &i| &mut n.children[i])
    }

    /// Pre-order paths of every node below the root.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        fn go(n: &GenNode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            for (i, c) in n.children.iter().enumerate() {
                prefix.push(i);
                out.push(prefix.clone());
                go(c, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

pub struct DocGen {
    rng: StdRng,
    next_token: usize,
}

impl DocGen {
    pub fn new(seed: u64) -> Self {
        Self { rng: StdRng::seed_from_u64(seed), next_token: 0 }
    }

    fn token(&mut self) -> String {
        self.next_token += 1;
        format!("t{}", self.next_token)
    }

    fn phrase(&mut self, min: usize, max: usize) -> String {
        let n = self.rng.gen_range(min..=max);
        let mut words: Vec<String> = (0..n).map(|_| WORDS.choose(&mut self.rng).unwrap().to_string()).collect();
        let at = self.rng.gen_range(0..=words.len());
        words.insert(at, self.token());
        words.join(" ")
    }

    fn paragraph(&mut self) -> GenNode {
        let mut text = self.phrase(3, 9);
        if self.rng.gen_bool(0.3) {
            text = format!("{text}\n{}", self.phrase(2, 6));
        }
        GenNode::leaf(NodeKind::Paragraph, text)
    }

    fn directive(&mut self) -> GenNode {
        let marker = MARKERS.choose(&mut self.rng).unwrap();
        GenNode::leaf(NodeKind::Directive, format!("{marker} {}", self.phrase(2, 7)))
    }

    fn code(&mut self) -> GenNode {
        let lines: Vec<String> = (0..self.rng.gen_range(1..=3)).map(|_| self.phrase(1, 4)).collect();
        GenNode::leaf(NodeKind::CodeBlock, lines.join("\n"))
    }

    fn list_item(&mut self) -> GenNode {
        if self.rng.gen_bool(0.25) {
            let marker = MARKERS.choose(&mut self.rng).unwrap();
            GenNode::leaf(NodeKind::Directive, format!("{marker} {}", self.phrase(1, 5)))
        } else {
            GenNode::leaf(NodeKind::ListItem, self.phrase(1, 6))
        }
    }

    fn list(&mut self) -> GenNode {
        let items = (0..self.rng.gen_range(1..=4)).map(|_| self.list_item()).collect();
        GenNode { kind: NodeKind::List, level: None, text: String::new(), children: items }
    }

    fn non_list_block(&mut self) -> GenNode {
        match self.rng.gen_range(0..10) {
            0..=4 => self.paragraph(),
            5..=7 => self.directive(),
            _ => self.code(),
        }
    }

    fn blocks(&mut self, max: usize) -> Vec<GenNode> {
        let n = self.rng.gen_range(0..=max);
        let mut out: Vec<GenNode> = Vec::with_capacity(n);
        for _ in 0..n {
            let prev_list = out.last().is_some_and(|b| b.kind == NodeKind::List);
            if !prev_list && self.rng.gen_bool(0.25) {
                out.push(self.list());
            } else {
                out.push(self.non_list_block());
            }
        }
        out
    }

    fn section(&mut self, level: u8) -> GenNode {
        let mut children = self.blocks(4);
        if level < 3 {
            for _ in 0..self.rng.gen_range(0..=2) {
                children.push(self.section(level + 1));
            }
        }
        GenNode { kind: NodeKind::Section, level: Some(level), text: self.phrase(1, 3), children }
    }

    pub fn document(&mut self) -> GenNode {
        let mut children = Vec::new();
        for _ in 0..self.rng.gen_range(0..=3) {
            let key = self.token();
            let value = self.phrase(1, 3);
            children.push(GenNode::leaf(NodeKind::Metadata, format!("{key}: {value}")));
        }
        children.extend(self.blocks(3));
        for _ in 0..self.rng.gen_range(0..=4) {
            children.push(self.section(1));
        }
        GenNode { kind: NodeKind::Document, level: None, text: String::new(), children }
    }

    fn pick_mutation(&mut self, doc: &GenNode) -> Option<Mutation> {
        match self.rng.gen_range(0..4) {
            0 => {
                let targets: Vec<_> = doc.paths().into_iter().filter(|p| doc.get(p).kind != NodeKind::List).collect();
                let path = targets.choose(&mut self.rng)?.clone();
                Some(Mutation::Edit { path, suffix: self.token() })
            }
            1 => {
                let targets: Vec<_> = doc.paths().into_iter().filter(|p| can_delete(doc, p)).collect();
                Some(Mutation::Delete { path: targets.choose(&mut self.rng)?.clone() })
            }
            2 => {
                let mut parents = vec![Vec::new()];
                parents.extend(doc.paths().into_iter().filter(|p| {
                    matches!(doc.get(p).kind, NodeKind::Section | NodeKind::List)
                }));
                let parent = parents.choose(&mut self.rng)?.clone();
                let p = doc.get(&parent);
                let (index, node) = if p.kind == NodeKind::List {
                    (self.rng.gen_range(0..=p.children.len()), self.list_item())
                } else {
                    let first = p.children.iter().take_while(|c| c.kind == NodeKind::Metadata).count();
                    let subs = p.children.iter().position(|c| c.kind == NodeKind::Section).unwrap_or(p.children.len());
                    let level = p.level.map_or(1, |l| l + 1);
                    if level <= 3 && self.rng.gen_bool(0.3) {
                        (self.rng.gen_range(subs..=p.children.len()), self.section(level))
                    } else {
                        (self.rng.gen_range(first..=subs), self.non_list_block())
                    }
                };
                let mut path = parent;
                path.push(index);
                Some(Mutation::Insert { path, node })
            }
            _ => {
                let targets: Vec<_> = doc.paths().into_iter().filter(|p| can_swap(doc, p)).collect();
                Some(Mutation::Swap { path: targets.choose(&mut self.rng)?.clone() })
            }
        }
    }

    /// A random applicable mutation; `None` only for documents too small to
    /// mutate in any way.
    pub fn mutation(&mut self, doc: &GenNode) -> Option<Mutation> {
        (0..16).find_map(|_| self.pick_mutation(doc))
    }

    pub fn edit(&mut self, doc: &GenNode) -> Option<Mutation> {
        let targets: Vec<_> = doc.paths().into_iter().filter(|p| doc.get(p).kind != NodeKind::List).collect();
        let path = targets.choose(&mut self.rng)?.clone();
        Some(Mutation::Edit { path, suffix: self.token() })
    }

    pub fn swap(&mut self, doc: &GenNode) -> Option<Mutation> {
        let targets: Vec<_> = doc.paths().into_iter().filter(|p| can_swap(doc, p)).collect();
        Some(Mutation::Swap { path: targets.choose(&mut self.rng)?.clone() })
    }
}

fn parent_and_index(path: &[usize]) -> (&[usize], usize) {
    let (last, parent) = path.split_last().expect("non-root path");
    (parent, *last)
}

fn lists_adjacent(children: &[&GenNode]) -> bool {
    children.windows(2).any(|w| w[0].kind == NodeKind::List && w[1].kind == NodeKind::List)
}

fn can_delete(doc: &GenNode, path: &[usize]) -> bool {
    let (parent, i) = parent_and_index(path);
    let p = doc.get(parent);
    if p.kind == NodeKind::List {
        return p.children.len() >= 2;
    }
    let rest: Vec<&GenNode> = p.children.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).collect();
    !lists_adjacent(&rest)
}

/// Swaps `path` with its next sibling.
fn can_swap(doc: &GenNode, path: &[usize]) -> bool {
    let (parent, i) = parent_and_index(path);
    let p = doc.get(parent);
    let (Some(a), Some(b)) = (p.children.get(i), p.children.get(i + 1)) else {
        return false;
    };
    if p.kind == NodeKind::List {
        return true;
    }
    let same_class = (a.is_content_block() && b.is_content_block()) || (a.kind == NodeKind::Section && b.kind == NodeKind::Section);
    if !same_class {
        return false;
    }
    let mut order: Vec<&GenNode> = p.children.iter().collect();
    order.swap(i, i + 1);
    !lists_adjacent(&order)
}

#[derive(Debug, Clone)]
pub enum Mutation {
    Edit { path: Vec<usize>, suffix: String },
    Delete { path: Vec<usize> },
    Insert { path: Vec<usize>, node: GenNode },
    /// Exchanges the node at `path` with its next sibling.
    Swap { path: Vec<usize> },
}

impl Mutation {
    pub fn name(&self) -> &'static str {
        match self {
            Mutation::Edit { .. } => "edit",
            Mutation::Delete { .. } => "delete",
            Mutation::Insert { .. } => "insert",
            Mutation::Swap { .. } => "swap",
        }
    }

    pub fn apply(&self, doc: &GenNode) -> GenNode {
        let mut out = doc.clone();
        match self {
            Mutation::Edit { path, suffix } => {
                let n = out.get_mut(path);
                n.text = format!("{} {suffix}", n.text);
            }
            Mutation::Delete { path } => {
                let (parent, i) = parent_and_index(path);
                out.get_mut(parent).children.remove(i);
            }
            Mutation::Insert { path, node } => {
                let (parent, i) = parent_and_index(path);
                out.get_mut(parent).children.insert(i, node.clone());
            }
            Mutation::Swap { path } => {
                let (parent, i) = parent_and_index(path);
                out.get_mut(parent).children.swap(i, i + 1);
            }
        }
        out
    }

    /// Expected classification of every old and every new node path.
    pub fn expected(&self, old: &GenNode, new: &GenNode) -> Expected {
        let mut exp = Expected {
            old: old.paths().into_iter().map(|p| (p, ChangeKind::Unchanged)).collect(),
            new: new.paths().into_iter().map(|p| (p, ChangeKind::Unchanged)).collect(),
        };
        let mark = |map: &mut BTreeMap<Vec<usize>, ChangeKind>, pred: &dyn Fn(&[usize]) -> bool, kind| {
            for (p, k) in map.iter_mut() {
                if pred(p) {
                    *k = kind;
                }
            }
        };
        // For edits `parent` is the edited node itself, which is modified
        // along with its ancestors.
        let (parent, i) = match self {
            Mutation::Edit { path, .. } => (path.as_slice(), usize::MAX),
            Mutation::Delete { path } | Mutation::Insert { path, .. } | Mutation::Swap { path } => parent_and_index(path),
        };
        let ancestors = |p: &[usize]| !p.is_empty() && parent.starts_with(p);
        mark(&mut exp.old, &ancestors, ChangeKind::Modified);
        mark(&mut exp.new, &ancestors, ChangeKind::Modified);
        let sibling_at = |p: &[usize]| -> Option<usize> {
            (p.len() > parent.len() && p.starts_with(parent)).then(|| p[parent.len()])
        };
        match self {
            Mutation::Edit { .. } => {}
            Mutation::Delete { .. } => {
                mark(&mut exp.old, &|p| sibling_at(p) == Some(i), ChangeKind::Removed);
                mark(&mut exp.old, &|p| sibling_at(p).is_some_and(|j| j > i), ChangeKind::Moved);
                mark(&mut exp.new, &|p| sibling_at(p).is_some_and(|j| j >= i), ChangeKind::Moved);
            }
            Mutation::Insert { .. } => {
                mark(&mut exp.old, &|p| sibling_at(p).is_some_and(|j| j >= i), ChangeKind::Moved);
                mark(&mut exp.new, &|p| sibling_at(p) == Some(i), ChangeKind::Added);
                mark(&mut exp.new, &|p| sibling_at(p).is_some_and(|j| j > i), ChangeKind::Moved);
            }
            Mutation::Swap { .. } => {
                let swapped = |p: &[usize]| sibling_at(p).is_some_and(|j| j == i || j == i + 1);
                mark(&mut exp.old, &swapped, ChangeKind::Moved);
                mark(&mut exp.new, &swapped, ChangeKind::Moved);
            }
        }
        exp
    }
}

#[derive(Debug, PartialEq)]
pub struct Expected {
    pub old: BTreeMap<Vec<usize>, ChangeKind>,
    pub new: BTreeMap<Vec<usize>, ChangeKind>,
}

impl Expected {
    /// The same two maps read back out of a diff result.
    pub fn from_changes(changes: &promptlens::diff::ChangeSet) -> Self {
        let mut out = Expected { old: BTreeMap::new(), new: BTreeMap::new() };
        for e in &changes.entries {
            if let Some(p) = &e.old {
                out.old.insert(p.0.clone(), e.kind);
            }
            if let Some(p) = &e.new {
                out.new.insert(p.0.clone(), e.kind);
            }
        }
        out
    }
}

pub fn render(doc: &GenNode) -> String {
    fn block(n: &GenNode, out: &mut String) {
        match n.kind {
            NodeKind::Section => {
                let hashes = "#".repeat(n.level.expect("section level") as usize);
                out.push_str(&format!("{hashes} {}\n\n", n.text));
                for c in &n.children {
                    block(c, out);
                }
            }
            NodeKind::List => {
                for item in &n.children {
                    let mut lines = item.text.lines();
                    out.push_str(&format!("- {}\n", lines.next().unwrap_or_default()));
                    for l in lines {
                        out.push_str(&format!("  {l}\n"));
                    }
                }
                out.push('\n');
            }
            NodeKind::CodeBlock => out.push_str(&format!("```\n{}\n```\n\n", n.text)),
            NodeKind::Metadata => out.push_str(&format!("{}\n", n.text)),
            _ => out.push_str(&format!("{}\n\n", n.text)),
        }
    }
    let mut out = String::new();
    let mut after_meta = false;
    for c in &doc.children {
        if after_meta && c.kind != NodeKind::Metadata {
            out.push('\n');
        }
        after_meta = c.kind == NodeKind::Metadata;
        block(c, &mut out);
    }
    out
}

/// Checks the parsed tree has exactly the generated shape, kinds and texts.
pub fn shape_mismatch(parsed: &Node, generated: &GenNode) -> Option<String> {
    fn go(n: &Node, g: &GenNode, path: &mut Vec<usize>) -> Option<String> {
        let here = NodePath(path.clone());
        if n.kind != g.kind {
            return Some(format!("{here}: kind {} vs generated {}", n.kind.as_str(), g.kind.as_str()));
        }
        if n.text != g.text {
            return Some(format!("{here}: text {:?} vs generated {:?}", n.text, g.text));
        }
        if n.children.len() != g.children.len() {
            return Some(format!("{here}: {} children vs generated {}", n.children.len(), g.children.len()));
        }
        for (i, (nc, gc)) in n.children.iter().zip(&g.children).enumerate() {
            path.push(i);
            if let Some(m) = go(nc, gc, path) {
                return Some(m);
            }
            path.pop();
        }
        None
    }
    go(parsed, generated, &mut Vec::new())
}

/// Every non-blank line is owned by exactly one node, and every child span
/// nests inside its parent's.
pub fn coverage_violation(root: &Node, source: &str) -> Option<String> {
    let lines: Vec<&str> = source.lines().collect();
    let mut owners = vec![0usize; lines.len() + 1];
    for (path, n) in root.walk() {
        for c in &n.children {
            if c.span.start < n.span.start || c.span.end > n.span.end {
                return Some(format!("{path}: child span {} escapes {}", c.span, n.span));
            }
        }
        for l in n.owned_lines() {
            if l == 0 || l > lines.len() {
                return Some(format!("{path}: owns line {l} outside the document"));
            }
            owners[l] += 1;
        }
    }
    (1..=lines.len())
        .find(|&l| !lines[l - 1].trim().is_empty() && owners[l] != 1)
        .map(|l| format!("line {l} {:?} has {} owners", lines[l - 1], owners[l]))
}
