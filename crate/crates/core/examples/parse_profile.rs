//! Parses a prompt, prints its outline with spans and its structural
//! profile.
//!
//! `cargo run --example parse_profile [prompt.md]` (defaults to a bundled
//! fixture).

use std::path::PathBuf;

use promptlens::ast::{parse, profile};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sectioned.md"));
    let text = std::fs::read_to_string(&path).expect("read prompt");
    let doc = parse(&text);
    for d in &doc.diagnostics {
        eprintln!("{d}");
    }

    println!("{} ({} lines)", path.display(), doc.line_count);
    for (path, node) in doc.root.walk().skip(1) {
        let first_line = node.text.lines().next().unwrap_or("");
        println!(
            "{:indent$}{} {} {:?}  [{}]",
            "",
            node.kind,
            node.span,
            first_line,
            path,
            indent = 2 * (node.depth - 1)
        );
    }
    println!();
    print!("{}", profile(&doc.root));
}
