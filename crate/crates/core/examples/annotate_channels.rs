//! Assigns a semantic role to every node, prints the channel mix, then
//! checks which channels vary across three captured sessions of one prompt.
//!
//! `cargo run --example annotate_channels`

use std::path::Path;

use promptlens::annotate::{annotate, channel_distribution, Channel};
use promptlens::ast::parse;
use promptlens::diff::session_variance;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let read = |name: &str| std::fs::read_to_string(fixtures.join(name)).expect("fixture");

    let doc = parse(&read("sectioned.md"));
    let annotated = annotate(&doc.root);
    for (path, node) in doc.root.walk().skip(1) {
        let a = annotated.annotation(&path).expect("every node is annotated");
        println!("{path:<8} {:<10} {:<16} {:<12} {:?}", node.kind.as_str(), a.role.as_str(), a.channel.as_str(), a.confidence);
    }

    let mix = channel_distribution(&annotate(&parse(&read("channel-mix.md")).root)).expect("non-empty");
    println!("\nchannel-mix.md, {} nodes", mix.node_count);
    for c in Channel::ALL {
        println!("  {:<12} {:5.1}%", c.as_str(), 100.0 * mix.fraction(c));
    }
    println!("  unclassified {:5.1}%", 100.0 * mix.unclassified_fraction);

    let sessions: Vec<_> = (1..=3).map(|n| annotate(&parse(&read(&format!("sessions/session-{n}.md"))).root)).collect();
    let show = |label: &str, set: std::collections::BTreeSet<Channel>| {
        let names: Vec<_> = set.iter().map(|c| c.as_str()).collect();
        println!("{label}: {{{}}}", names.join(", "));
    };
    println!();
    show("sessions 1 vs 2", session_variance(&sessions[..2]).expect("two sessions"));
    show("sessions 1 vs 3", session_variance(&[sessions[0].clone(), sessions[2].clone()]).expect("two sessions"));
}
