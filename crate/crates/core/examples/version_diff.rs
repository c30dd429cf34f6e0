//! Diffs two versions of a prompt: two sections trade places, a directive
//! is reworded in place, and a bullet is added.
//!
//! `cargo run --example version_diff`

use promptlens::ast::parse;
use promptlens::diff::{diff, ChangeKind};

const V1: &str = "\
# Tone
Be concise.

# Tools
- Read before you edit.
- Prefer the search tool.

# Safety
NEVER run destructive commands.
";

const V2: &str = "\
# Tools
- Read before you edit.
- Prefer the search tool.

# Tone
Be concise.

# Safety
NEVER run destructive commands without confirmation.

- Ask before deleting files.
";

fn main() {
    let (old, new) = (parse(V1).root, parse(V2).root);
    let changes = diff(&old, &new);
    println!("{}\n", changes.summary);
    for e in changes.entries.iter().filter(|e| e.kind != ChangeKind::Unchanged) {
        let side = |p: &Option<promptlens::ast::NodePath>, root: &promptlens::ast::Node| match p {
            Some(p) => {
                let n = root.get(p).expect("path from diff");
                format!("{p} {} {:?}", n.kind, n.text.lines().next().unwrap_or(""))
            }
            None => "-".into(),
        };
        println!("{:<9} {:<48} -> {}", e.kind.to_string(), side(&e.old, &old), side(&e.new, &new));
    }
}
