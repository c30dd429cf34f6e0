use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Diagnostic, Document, Node};

/// On-disk AST format identifier. Bumped whenever node layout or the digest
/// algorithm changes.
pub const AST_FORMAT: &str = "promptlens-ast/1+xxh3-64";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstFile {
    pub format: String,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    pub root: Node,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("unsupported AST format {found:?} (expected {AST_FORMAT:?})")]
    Version { found: String },
    #[error("malformed AST file: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn to_json(doc: &Document) -> String {
    let file = AstFile {
        format: AST_FORMAT.to_string(),
        diagnostics: doc.diagnostics.clone(),
        root: doc.root.clone(),
    };
    serde_json::to_string_pretty(&file).expect("AST serializes")
}

pub fn from_json(s: &str) -> Result<AstFile, FormatError> {
    let file: AstFile = serde_json::from_str(s)?;
    if file.format != AST_FORMAT {
        return Err(FormatError::Version { found: file.format });
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;

    #[test]
    fn json_round_trip() {
        let doc = parse("# A\n- x\n- IMPORTANT y\n\n```\ncode\n```\n");
        let back = from_json(&to_json(&doc)).unwrap();
        assert_eq!(back.root, doc.root);
    }

    #[test]
    fn version_is_checked() {
        let doc = parse("x");
        let s = to_json(&doc).replace(AST_FORMAT, "promptlens-ast/0");
        assert!(matches!(from_json(&s), Err(FormatError::Version { .. })));
    }
}
