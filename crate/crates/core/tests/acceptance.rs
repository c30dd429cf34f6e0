//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Everything runs offline against `fixtures/`.

mod support;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use promptlens::annotate::{annotate, Channel};
use promptlens::ast::{parse, NodePath};
use promptlens::blocks::load_blocks;
use promptlens::config::DEFAULT_JUDGE_MODEL;
use promptlens::diff::{diff, session_variance};
use promptlens::gateway::{ledger_totals, load_ledger, CountingBackend, DenyAll, Gateway, ModelSpec, ReplayStore};
use promptlens::report::{convergence_table, cost_breakdown, round_currency, severity_distribution, SeverityScale};
use promptlens::rules::{full_search_space, run_directed, ImpactSeverity, RuleSet, RunOptions};
use promptlens::scour::{run_campaign, Campaign, CampaignConfig, CampaignStatus};
use rust_decimal::Decimal;
use support::docgen::{coverage_violation, render, shape_mismatch, DocGen, Expected, Mutation};

const REPLAY_BUDGET: Duration = Duration::from_secs(5);
const PROPERTY_BUDGET: Duration = Duration::from_secs(30);
const MUTATION_CASES: u64 = 1000;
const HASH_CASES: u64 = 1000;
/// Allowed per-cell deviation from published severity percentages.
const PERCENT_TOLERANCE: i64 = 1;
/// Inclusive bounds on the prefiltered pair count for the 56-block fixture.
const PAIR_BOUNDS: (usize, usize) = (100, 200);

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn replay_campaign(dir: &str) -> Result<Campaign, String> {
    let dir = fixtures().join(dir);
    let manifest: toml::Value = std::fs::read_to_string(dir.join("campaign.toml"))
        .map_err(|e| e.to_string())
        .and_then(|s| toml::from_str(&s).map_err(|e| e.to_string()))?;
    let field = |k: &str| manifest.get(k).ok_or_else(|| format!("campaign.toml lacks {k}"));
    let target_file = field("target")?.as_str().ok_or("target is not a string")?;
    let target = std::fs::read_to_string(dir.join(target_file)).map_err(|e| e.to_string())?;
    let roster: Vec<String> = field("roster")?
        .as_array()
        .ok_or("roster is not an array")?
        .iter()
        .filter_map(|v| v.as_str().map(String::from))
        .collect();
    let mut config = CampaignConfig::new(field("target_id")?.as_str().unwrap_or_default(), roster.clone());
    config.k = field("k")?.as_integer().ok_or("k is not an integer")? as usize;
    let store = ReplayStore::load_dir(&dir.join("replay")).map_err(|e| e.to_string())?;
    let gateway = Gateway::new(Arc::new(store), roster.iter().map(ModelSpec::free));
    run_campaign(&target, &config, &gateway, &mut |_| {}).map_err(|e| e.to_string())
}

type Row = (usize, &'static str, usize, usize, bool);

const CLAUDE_ROWS: &[Row] = &[
    (1, "Claude Opus 4.6", 21, 21, true),
    (2, "Gemini 2.0 Flash", 9, 30, true),
    (3, "Kimi K2.5", 14, 44, true),
    (4, "DeepSeek V3.2", 12, 56, true),
    (5, "Grok 4.1", 10, 66, true),
    (6, "Llama 4 Maverick", 5, 71, true),
    (7, "MiniMax M2.5", 20, 91, true),
    (8, "Qwen3-235B", 3, 94, false),
    (9, "GLM 4.7", 14, 108, false),
    (10, "GPT-OSS 120B", 8, 116, false),
];
const CODEX_ROWS: &[Row] = &[(1, "DeepSeek V3.2", 10, 10, true), (2, "Grok 4.1", 5, 15, false)];
const GEMINI_ROWS: &[Row] = &[
    (1, "DeepSeek V3.2", 12, 12, true),
    (2, "Qwen3-235B", 5, 17, true),
    (3, "GLM 4.7", 4, 21, false),
];

fn ac1_convergence_replay() -> Outcome {
    let start = Instant::now();
    for (dir, rows) in [("claude-campaign", CLAUDE_ROWS), ("codex-campaign", CODEX_ROWS), ("gemini-campaign", GEMINI_ROWS)] {
        let campaign = replay_campaign(dir)?;
        ensure(campaign.status == CampaignStatus::Converged, || {
            format!("{dir}: status {}", campaign.status.as_str())
        })?;
        let got: Vec<Row> = convergence_table(&campaign)
            .into_iter()
            .zip(rows)
            .map(|(r, want)| (r.pass, want.1, r.new, r.cumulative, r.send_another))
            .collect();
        let models: Vec<String> = convergence_table(&campaign).into_iter().map(|r| r.model_id).collect();
        let want_models: Vec<&str> = rows.iter().map(|r| r.1).collect();
        ensure(models == want_models, || format!("{dir}: models {models:?}"))?;
        ensure(got.as_slice() == rows, || format!("{dir}: rows {got:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < REPLAY_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("3 campaigns, 15 rows exact, {:.0?}", elapsed))
}

fn ac2_cost_ledger() -> Outcome {
    let records = load_ledger(&fixtures().join("ledger/cost-ledger.jsonl")).map_err(|e| e.to_string())?;
    let totals = ledger_totals(&records);
    let d = |s: &str| s.parse::<Decimal>().expect("decimal literal");
    ensure(round_currency(totals.total) == d("0.263"), || format!("total {}", totals.total))?;
    ensure(totals.calls == 26, || format!("{} calls", totals.calls))?;
    let table = [
        ("Kimi K2.5", 2, "0.054"),
        ("DeepSeek R1", 1, "0.054"),
        ("Qwen3-235B", 3, "0.053"),
        ("GLM 4.7", 2, "0.039"),
        ("Grok 4.1 Fast", 5, "0.016"),
        ("Llama 4 Maverick", 3, "0.015"),
        ("DeepSeek V3.2", 3, "0.012"),
        ("MiniMax M2.5", 1, "0.012"),
        ("Gemini 2.0 Flash", 2, "0.005"),
        ("GPT-OSS 120B", 4, "0.003"),
    ];
    ensure(totals.models.len() == table.len(), || format!("{} model rows", totals.models.len()))?;
    for (model, calls, cost) in table {
        let row = totals.models.iter().find(|m| m.model_id == model).ok_or(format!("no row for {model}"))?;
        ensure(row.calls == calls && round_currency(row.cost) == d(cost), || {
            format!("{model}: {} calls, {}", row.calls, row.cost)
        })?;
    }
    let breakdown = cost_breakdown(&records, 152);
    let per = breakdown.cost_per_finding.ok_or("no cost per finding")?;
    ensure(round_currency(per) == d("0.002"), || format!("per finding {per}"))?;
    Ok(format!("total ${}, 10 model rows, ${} per finding", round_currency(totals.total), round_currency(per)))
}

fn directed_fixture() -> Result<promptlens::blocks::BlockSet, String> {
    load_blocks(&fixtures().join("blocks56/blocks.txt")).map_err(|e| e.to_string())
}

fn ac3_directed_replay() -> Outcome {
    let blocks = directed_fixture()?;
    let store = ReplayStore::load_dir(&fixtures().join("blocks56/replay")).map_err(|e| e.to_string())?;
    let gateway = Gateway::new(Arc::new(store), [ModelSpec::free(DEFAULT_JUDGE_MODEL)]);
    let options = RunOptions { model_id: DEFAULT_JUDGE_MODEL.into(), jobs: 4 };
    let run = run_directed(&blocks, &RuleSet::builtin(), &gateway, &options);
    ensure(run.report.errors.is_empty(), || format!("pair errors: {:?}", run.report.errors))?;
    let tally = |s: ImpactSeverity| run.patterns.iter().filter(|p| p.severity == s).count();
    let (c, ma, mi) = (tally(ImpactSeverity::Critical), tally(ImpactSeverity::Major), tally(ImpactSeverity::Minor));
    let stat = run.patterns.iter().filter(|p| p.statically_detectable).count();
    ensure(run.patterns.len() == 21 && (c, ma, mi) == (4, 3, 14) && stat == 20, || {
        format!("{} patterns, {c}/{ma}/{mi}, {stat} static", run.patterns.len())
    })?;
    Ok(format!("21 patterns, 4 critical / 3 major / 14 minor, {stat}/21 static"))
}

fn ac4_prefilter_arithmetic() -> Outcome {
    let space = full_search_space(56, 5);
    // Ordered pairs with self-pairs over 56 blocks, once per rule.
    let oracle = (0..56u64).flat_map(|a| (0..56u64).map(move |b| (a, b))).count() as u64 * 5;
    ensure(space == 15_680 && space == oracle, || format!("search space {space}"))?;
    let blocks = directed_fixture()?;
    let rules = RuleSet::builtin();
    let pairs: usize = rules.rules.iter().map(|r| promptlens::rules::prefilter(&blocks, r).len()).sum();
    ensure((PAIR_BOUNDS.0..=PAIR_BOUNDS.1).contains(&pairs), || format!("{pairs} prefiltered pairs"))?;
    Ok(format!("search space {space}, {pairs} prefiltered pairs"))
}

fn ac5_severity_distributions() -> Outcome {
    // (fixture, counts, published percentages) in scale order.
    let published: [(&str, [usize; 4], [i64; 4]); 3] = [
        ("claude-campaign", [34, 36, 34, 12], [29, 31, 29, 10]),
        ("codex-campaign", [3, 7, 5, 0], [20, 47, 33, 0]),
        ("gemini-campaign", [4, 9, 6, 2], [19, 43, 29, 10]),
    ];
    let mut cells = Vec::new();
    for (dir, counts, percents) in published {
        let campaign = replay_campaign(dir)?;
        let dist = severity_distribution(SeverityScale::Epistemic, campaign.findings().map(|f| f.severity.into()))
            .map_err(|e| e.to_string())?;
        for (i, row) in dist.rows.iter().enumerate() {
            ensure(row.count == counts[i], || format!("{dir} {}: count {}", row.level, row.count))?;
            let off = row.percent as i64 - percents[i];
            ensure(off.abs() <= PERCENT_TOLERANCE, || format!("{dir} {}: {}% vs {}%", row.level, row.percent, percents[i]))?;
        }
        ensure(dist.rows.iter().map(|r| r.percent).sum::<u32>() == 100, || format!("{dir}: percentages do not sum to 100"))?;
        cells.push(dist.rows.iter().map(|r| r.percent.to_string()).collect::<Vec<_>>().join("/"));
    }
    Ok(format!("12 cells within ±{PERCENT_TOLERANCE}: {}", cells.join(", ")))
}

fn ac6_mutation_oracle() -> Outcome {
    let start = Instant::now();
    let mut by_kind = std::collections::BTreeMap::<&str, usize>::new();
    for seed in 0..MUTATION_CASES {
        let mut g = DocGen::new(seed);
        let old_model = g.document();
        let old_src = render(&old_model);
        let old = parse(&old_src);
        if let Some(m) = shape_mismatch(&old.root, &old_model) {
            return Err(format!("seed {seed}: generated document parsed differently: {m}"));
        }
        if let Some(v) = coverage_violation(&old.root, &old_src) {
            return Err(format!("seed {seed}: {v}"));
        }
        let Some(mutation) = g.mutation(&old_model) else {
            continue;
        };
        let new_model = mutation.apply(&old_model);
        let new_src = render(&new_model);
        let new = parse(&new_src);
        if let Some(m) = shape_mismatch(&new.root, &new_model) {
            return Err(format!("seed {seed} {}: mutated document parsed differently: {m}", mutation.name()));
        }
        if let Some(v) = coverage_violation(&new.root, &new_src) {
            return Err(format!("seed {seed} {}: {v}", mutation.name()));
        }
        let want = mutation.expected(&old_model, &new_model);
        let got = Expected::from_changes(&diff(&old.root, &new.root));
        if got != want {
            return Err(format!("seed {seed} {}: {}", mutation.name(), first_difference(&want, &got)));
        }
        *by_kind.entry(mutation.name()).or_default() += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < PROPERTY_BUDGET, || format!("took {elapsed:?}"))?;
    let mix: Vec<String> = by_kind.iter().map(|(k, n)| format!("{k} {n}")).collect();
    Ok(format!("{MUTATION_CASES} cases ({}), coverage holds, {:.1?}", mix.join(", "), elapsed))
}

fn first_difference(want: &Expected, got: &Expected) -> String {
    for (side, w, g) in [("old", &want.old, &got.old), ("new", &want.new, &got.new)] {
        for (path, kind) in w {
            let actual = g.get(path);
            if actual != Some(kind) {
                return format!("{side} {}: expected {kind}, diff said {actual:?}", NodePath(path.clone()));
            }
        }
        if let Some(extra) = g.keys().find(|p| !w.contains_key(*p)) {
            return format!("{side} {}: unexpected entry", NodePath(extra.clone()));
        }
    }
    "maps differ".into()
}

fn ac7_hash_invariants() -> Outcome {
    let mut checked = (0usize, 0usize);
    for seed in 0..HASH_CASES {
        let mut g = DocGen::new(10_000 + seed);
        let model = g.document();
        let old = parse(&render(&model)).root;
        if let Some(edit @ Mutation::Edit { .. }) = g.edit(&model) {
            let new = parse(&render(&edit.apply(&model))).root;
            for (path, node) in old.walk() {
                let after = new.get(&path).ok_or_else(|| format!("seed {seed}: edit lost {path}"))?;
                ensure(after.structural_hash == node.structural_hash, || {
                    format!("seed {seed}: edit changed structural hash at {path}")
                })?;
                checked.0 += 1;
            }
        }
        if let Some(swap @ Mutation::Swap { .. }) = g.swap(&model) {
            let Mutation::Swap { path } = &swap else { unreachable!() };
            let new = parse(&render(&swap.apply(&model))).root;
            let mut next = path.clone();
            *next.last_mut().expect("non-root") += 1;
            let (a, b) = (NodePath(path.clone()), NodePath(next));
            for (from, to) in [(&a, &b), (&b, &a)] {
                let before = old.get(from).expect("swap source").content_hash;
                let after = new.get(to).ok_or_else(|| format!("seed {seed}: swap lost {to}"))?.content_hash;
                ensure(before == after, || format!("seed {seed}: swap changed content hash of {from}"))?;
                checked.1 += 1;
            }
        }
    }
    Ok(format!("{HASH_CASES} documents, {} structural and {} content checks, 0 violations", checked.0, checked.1))
}

fn ac8_session_variance() -> Outcome {
    let load = |n: usize| -> Result<_, String> {
        let text = std::fs::read_to_string(fixtures().join(format!("sessions/session-{n}.md"))).map_err(|e| e.to_string())?;
        Ok(annotate(&parse(&text).root))
    };
    let (s1, s2, s3) = (load(1)?, load(2)?, load(3)?);
    let env = session_variance(&[s1.clone(), s2]).map_err(|e| e.to_string())?;
    let behavior = session_variance(&[s1, s3]).map_err(|e| e.to_string())?;
    ensure(env.iter().eq([&Channel::Environment]), || format!("metadata-only sessions: {env:?}"))?;
    ensure(behavior.iter().eq([&Channel::Behavior]), || format!("safety-directive sessions: {behavior:?}"))?;
    Ok("{environment} and {behavior}".into())
}

fn ac9_structural_zero_cost() -> Outcome {
    let blocks = directed_fixture()?;
    let counter = Arc::new(CountingBackend::new(DenyAll));
    let gateway = Gateway::new(counter.clone(), [ModelSpec::free(DEFAULT_JUDGE_MODEL)]);
    let options = RunOptions { model_id: DEFAULT_JUDGE_MODEL.into(), jobs: 2 };
    let run = run_directed(&blocks, &RuleSet::builtin().structural_only(), &gateway, &options);
    ensure(run.report.errors.is_empty(), || format!("pair errors: {:?}", run.report.errors))?;
    ensure(counter.calls() == 0 && gateway.ledger().is_empty(), || format!("{} backend calls", counter.calls()))?;
    Ok(format!("{} structural patterns, 0 backend calls", run.patterns.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("AC1 convergence replay", ac1_convergence_replay),
        ("AC2 cost ledger", ac2_cost_ledger),
        ("AC3 directed replay", ac3_directed_replay),
        ("AC4 pre-filter arithmetic", ac4_prefilter_arithmetic),
        ("AC5 severity distributions", ac5_severity_distributions),
        ("AC6 AST mutation oracle", ac6_mutation_oracle),
        ("AC7 hash invariants", ac7_hash_invariants),
        ("AC8 session variance", ac8_session_variance),
        ("AC9 structural-rule zero cost", ac9_structural_zero_cost),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
