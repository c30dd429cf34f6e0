//! Per-call cost accounting: prices from the model roster, provider-reported
//! costs taking precedence, and retries linked to the call they repeat.
//! Finishes with the breakdown of the bundled billing ledger.
//!
//! `cargo run --example cost_accounting`

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use promptlens::gateway::{load_ledger, ChatRequest, Gateway, ModelSpec, RetryPolicy, ScriptStep, ScriptedBackend};
use promptlens::report::cost_breakdown;
use rust_decimal::Decimal;

fn main() {
    let price = |s: &str| s.parse::<Decimal>().expect("price");
    let models = [
        ModelSpec::new("fast", "vendor/fast", price("0.10"), price("0.40")),
        ModelSpec::new("deep", "vendor/deep", price("0.60"), price("2.50")),
    ];
    let mut reported = ScriptStep::reply("ok", 20_000, 1_000);
    if let Ok(r) = &mut reported.0 {
        r.reported_cost = Some(price("0.0125"));
    }
    let backend = ScriptedBackend::new([
        ScriptStep::reply("ok", 12_000, 800),
        ScriptStep::transport("connection reset"),
        ScriptStep::reply("ok", 30_000, 2_000),
        reported,
    ]);
    let gateway = Gateway::new(Arc::new(backend), models)
        .with_retry(RetryPolicy { max_retries: 1, backoff: Duration::ZERO });
    for model in ["fast", "deep", "deep"] {
        let c = gateway.complete(&ChatRequest::single(model, "Review this prompt.")).expect("scripted reply");
        println!("call {} on {model}: {} + {} tokens", c.call_id, c.prompt_tokens, c.completion_tokens);
    }
    for r in gateway.ledger().records() {
        println!(
            "  #{} {:<5} ${:<10} {:?}{}",
            r.call_id,
            r.model_id,
            r.cost,
            r.provenance,
            r.retry_of.map(|p| format!(" retry of #{p}")).unwrap_or_default()
        );
    }
    println!("\n{}", cost_breakdown(&gateway.ledger().records(), 3));

    let ledger = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ledger/cost-ledger.jsonl");
    let records = load_ledger(&ledger).expect("ledger fixture");
    print!("{}", cost_breakdown(&records, 152));
}
