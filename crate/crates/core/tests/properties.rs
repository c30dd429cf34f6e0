mod support;

use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;
use promptlens::ast::parse;
use promptlens::diff::diff;
use promptlens::gateway::{ledger_totals, BackendReply, ChatRequest, CostProvenance, CostRecord, FnBackend, Gateway, ModelSpec};
use promptlens::report::{coverage_matrix, largest_remainder};
use promptlens::scour::{run_campaign, CampaignConfig, CampaignStatus, ScourFinding, ScourSeverity};
use rust_decimal::Decimal;
use support::docgen::{coverage_violation, render, shape_mismatch, DocGen, Expected};

fn reply(pass: usize, another: bool) -> String {
    let body = serde_json::json!({
        "findings": [{
            "title": format!("finding from pass {pass}"),
            "category": format!("overlap: pass {pass}"),
            "severity": "curious",
            "description": "two instructions pull apart",
        }],
        "unexplored": [],
        "should_send_another": another,
    });
    format!("```json\n{body}\n```")
}

/// Brute-force stopping point: (passes run, status).
fn expected_stop(votes: &[bool], k: usize, max_passes: usize) -> (usize, CampaignStatus) {
    let limit = votes.len().min(max_passes);
    for n in 1..=limit {
        if n >= k && votes[n - k..n].iter().all(|v| !v) {
            return (n, CampaignStatus::Converged);
        }
    }
    if votes.len() <= max_passes {
        (votes.len(), CampaignStatus::RosterExhausted)
    } else {
        (max_passes, CampaignStatus::MaxPasses)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn campaign_stops_where_brute_force_says(
        votes in prop::collection::vec(any::<bool>(), 1..9),
        k in 1usize..4,
        extra in 0usize..3,
        short in 0usize..3,
    ) {
        let roster: Vec<String> = (0..votes.len()).map(|i| format!("m{i}")).collect();
        let max_passes = (votes.len() + extra).saturating_sub(short).max(1);
        let replies: HashMap<String, String> =
            roster.iter().enumerate().map(|(i, m)| (m.clone(), reply(i + 1, votes[i]))).collect();
        let backend = FnBackend(move |spec: &ModelSpec, _: &ChatRequest| {
            Ok(BackendReply::text(replies[&spec.model_id].clone(), 10, 10))
        });
        let gateway = Gateway::new(Arc::new(backend), roster.iter().map(ModelSpec::free));
        let config = CampaignConfig { k, max_passes, ..CampaignConfig::new("t", roster.clone()) };
        let campaign = run_campaign("# Rules\nbe brief\n", &config, &gateway, &mut |_| {}).unwrap();
        let (passes, status) = expected_stop(&votes, k, max_passes);
        prop_assert_eq!(campaign.passes.len(), passes);
        prop_assert_eq!(campaign.status, status);
        prop_assert_eq!(campaign.total_findings(), passes);
    }

    #[test]
    fn largest_remainder_sums_to_100_and_stays_within_a_point(
        counts in prop::collection::vec(0usize..500, 1..8),
    ) {
        let out = largest_remainder(&counts);
        let total: usize = counts.iter().sum();
        if total == 0 {
            prop_assert!(out.iter().all(|p| *p == 0));
        } else {
            prop_assert_eq!(out.iter().sum::<u32>(), 100);
            for (c, p) in counts.iter().zip(&out) {
                let floor = (c * 100 / total) as u32;
                prop_assert!(*p == floor || *p == floor + 1, "count {} got {}", c, p);
            }
        }
    }

    #[test]
    fn coverage_rows_count_each_models_findings(
        cells in prop::collection::vec((0usize..4, 0usize..6), 0..60),
    ) {
        let findings: Vec<ScourFinding> = cells
            .iter()
            .enumerate()
            .map(|(i, (m, c))| ScourFinding {
                id: format!("f{i}"),
                pass_index: m + 1,
                model_id: format!("model {m}"),
                category: format!("cat {c}"),
                severity: ScourSeverity::Notable,
                title: String::new(),
                description: String::new(),
                location: None,
            })
            .collect();
        let matrix = coverage_matrix(&findings);
        let mut grand = 0;
        for model in &matrix.models {
            let by_hand = findings.iter().filter(|f| &f.model_id == model).count();
            let by_cells: usize = matrix.categories.iter().map(|c| matrix.get(model, c)).sum();
            prop_assert_eq!(matrix.row_total(model), by_hand);
            prop_assert_eq!(by_cells, by_hand);
            grand += by_hand;
        }
        prop_assert_eq!(grand, findings.len());
    }

    #[test]
    fn ledger_totals_ignore_record_order(
        rows in prop::collection::vec((0usize..5, 0u64..100_000, 0i64..10_000), 0..40),
        seed in any::<u64>(),
    ) {
        let records: Vec<CostRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, (m, t, c))| CostRecord {
                call_id: i as u64 + 1,
                model_id: format!("model {m}"),
                prompt_tokens: *t,
                completion_tokens: t / 2,
                cost: Decimal::new(*c, 6),
                provenance: CostProvenance::Computed,
                retry_of: None,
            })
            .collect();
        let mut shuffled = records.clone();
        use rand::{seq::SliceRandom, SeedableRng};
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        let a = ledger_totals(&records);
        prop_assert_eq!(&a, &ledger_totals(&shuffled));
        prop_assert_eq!(a.total, records.iter().map(|r| r.cost).sum::<Decimal>());
        prop_assert!(a.models.windows(2).all(|w| w[0].cost >= w[1].cost));
    }

    #[test]
    fn parsing_is_deterministic_and_covers_every_line(seed in any::<u64>()) {
        let model = DocGen::new(seed).document();
        let src = render(&model);
        let doc = parse(&src);
        prop_assert_eq!(&doc, &parse(&src));
        prop_assert_eq!(shape_mismatch(&doc.root, &model), None);
        prop_assert_eq!(coverage_violation(&doc.root, &src), None);
    }

    #[test]
    fn hashes_ignore_trailing_whitespace(seed in any::<u64>(), pad in 1usize..4) {
        let src = render(&DocGen::new(seed).document());
        let padded: String = src.lines().map(|l| format!("{l}{}\n", " ".repeat(pad))).collect();
        let (a, b) = (parse(&src).root, parse(&padded).root);
        let hashes = |n: &promptlens::ast::Node| -> Vec<_> {
            n.walk().map(|(_, n)| (n.structural_hash, n.content_hash)).collect()
        };
        prop_assert_eq!(hashes(&a), hashes(&b));
        prop_assert!(diff(&a, &b).summary.is_identity());
    }

    #[test]
    fn single_mutations_diff_as_applied(seed in any::<u64>()) {
        let mut g = DocGen::new(seed);
        let old_model = g.document();
        if let Some(m) = g.mutation(&old_model) {
            let new_model = m.apply(&old_model);
            let (old, new) = (parse(&render(&old_model)).root, parse(&render(&new_model)).root);
            prop_assert_eq!(Expected::from_changes(&diff(&old, &new)), m.expected(&old_model, &new_model));
        }
    }
}
