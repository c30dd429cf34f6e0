use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Node, NodeKind};

/// Shape summary of a parsed prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralProfile {
    pub node_count: usize,
    pub max_depth: usize,
    pub section_count: usize,
    pub top_level_directive_count: usize,
    pub kind_counts: BTreeMap<NodeKind, usize>,
}

impl StructuralProfile {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.kind_counts.get(&kind).copied().unwrap_or(0)
    }
}

/// Depth convention: the document is depth 0, its children depth 1.
pub fn profile(document: &Node) -> StructuralProfile {
    let mut kind_counts: BTreeMap<NodeKind, usize> =
        NodeKind::ALL.iter().map(|k| (*k, 0)).collect();
    let mut max_depth = 0;
    let mut node_count = 0;
    let mut top_level_directive_count = 0;
    for (_, node) in document.walk() {
        node_count += 1;
        max_depth = max_depth.max(node.depth);
        *kind_counts.entry(node.kind).or_default() += 1;
        if node.kind == NodeKind::Directive && node.depth == 1 {
            top_level_directive_count += 1;
        }
    }
    StructuralProfile {
        node_count,
        max_depth,
        section_count: kind_counts[&NodeKind::Section],
        top_level_directive_count,
        kind_counts,
    }
}

impl fmt::Display for StructuralProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rows: Vec<(String, usize)> = vec![
            ("Nodes".into(), self.node_count),
            ("Max depth".into(), self.max_depth),
            ("Sections".into(), self.section_count),
            ("Top-level directives".into(), self.top_level_directive_count),
        ];
        for (kind, n) in &self.kind_counts {
            rows.push((format!("  {kind}"), *n));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v:>6}")?;
        }
        Ok(())
    }
}
