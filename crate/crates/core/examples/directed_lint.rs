//! Runs the built-in interference rules over the 56-block fixture: first
//! structural rules only against a backend that counts calls, then the full
//! set served from the recorded replay store.
//!
//! `cargo run --example directed_lint`

use std::path::Path;
use std::sync::Arc;

use promptlens::blocks::load_blocks;
use promptlens::config::DEFAULT_JUDGE_MODEL;
use promptlens::gateway::{CountingBackend, DenyAll, Gateway, ModelSpec, ReplayStore};
use promptlens::report::{pattern_summary, render_patterns};
use promptlens::rules::{run_directed, RuleSet, RunOptions};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/blocks56");
    let blocks = load_blocks(&dir.join("blocks.txt")).expect("blocks fixture");
    let options = RunOptions { model_id: DEFAULT_JUDGE_MODEL.into(), jobs: 4 };

    let counter = Arc::new(CountingBackend::new(DenyAll));
    let gateway = Gateway::new(counter.clone(), [ModelSpec::free(DEFAULT_JUDGE_MODEL)]);
    let structural = run_directed(&blocks, &RuleSet::builtin().structural_only(), &gateway, &options);
    println!(
        "structural only: {} patterns from {} pairs, {} backend calls\n",
        structural.patterns.len(),
        structural.report.prefiltered(),
        counter.calls()
    );

    let store = ReplayStore::load_dir(&dir.join("replay")).expect("replay store");
    let gateway = Gateway::new(Arc::new(store), [ModelSpec::free(DEFAULT_JUDGE_MODEL)]);
    let run = run_directed(&blocks, &RuleSet::builtin(), &gateway, &options);
    print!("{}", render_patterns(&run.patterns));
    let s = pattern_summary(&run.patterns);
    println!("{}", serde_json::to_string(&s).expect("summary serializes"));
    for r in &run.report.rules {
        println!("  {:<24} {:>3} pairs {:>3} patterns", r.rule_id, r.pairs, r.patterns);
    }
    println!("search space {}, {} model calls", run.report.search_space, run.report.llm_calls);
}
