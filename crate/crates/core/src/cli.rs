//! Command-line front end. Every stage is a subcommand; machine output goes
//! to the file named by `--out`, human summaries to stdout.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 gateway failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::annotate::{annotate_with, channel_distribution, Channel, Lexicon};
use crate::ast::{self, parse_bytes, profile, Document, NodeKind};
use crate::blocks::{decompose_with_llm, load_blocks, serialize_blocks, BlockSet, DecomposeError, Modality, Tier};
use crate::config::{Config, RuleSource};
use crate::diff::{diff, session_variance, ChangeKind};
use crate::gateway::{
    load_ledger, write_ledger, Backend, DenyAll, Gateway, LiveBackend, ModelSpec, ReplayStore,
};
use crate::report::{
    campaign_report, cost_breakdown, pattern_summary, render_patterns, render_table, to_json, CampaignReport,
    PatternSummary, SeverityScale,
};
use crate::rules::{run_directed, InterferencePattern, RuleSet, RunOptions};
use crate::scour::{load_campaign_log, run_campaign, CampaignConfig, CampaignStatus, LogEvent};

/// Blocks file looked up when `--blocks` names a directory.
pub const BLOCKS_FILE: &str = "blocks.txt";
/// Campaign definition looked up when a campaign directory is given.
pub const CAMPAIGN_FILE: &str = "campaign.toml";

#[derive(Debug, Parser)]
#[command(name = "promptlens", version, about = "Static analysis for LLM agent system prompts")]
struct Cli {
    /// Roster and defaults (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GatewayKind {
    Offline,
    Replay,
    Live,
}

#[derive(Debug, Args)]
struct GatewayArgs {
    /// Serve model calls from recorded responses. A directory holding a
    /// `replay/` subdirectory uses that.
    #[arg(long, conflicts_with = "live")]
    replay: Option<PathBuf>,
    /// Call the provider over the network. Never implied.
    #[arg(long)]
    live: bool,
    /// Gateway kind; `replay` without `--replay` falls back to the default store.
    #[arg(long, value_enum)]
    gateway: Option<GatewayKind>,
    /// Write every call's cost record to this JSON-lines file.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a prompt into the two-layer AST.
    Parse {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural profile; several files print side by side.
    Profile {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Semantic roles and channel shares; several files also report session variance.
    Annotate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Node-level diff of two prompt versions.
    Diff {
        old: PathBuf,
        new: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a block annotation file, or decompose a prompt with a model.
    Blocks {
        path: PathBuf,
        #[arg(long)]
        decompose: bool,
        #[arg(long)]
        model: Option<String>,
        /// Source id written into decomposed output; defaults to the file stem.
        #[arg(long)]
        source_id: Option<String>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Directed rule evaluation over a block set.
    Lint {
        /// Block annotation file, or a directory holding `blocks.txt`.
        #[arg(long)]
        blocks: PathBuf,
        /// `builtin` or a rule file.
        #[arg(long)]
        rules: Option<String>,
        /// Drop every rule that would call a model.
        #[arg(long)]
        structural_only: bool,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-model exploration campaign.
    Scour {
        /// Target prompt; defaults to the campaign's `target`.
        target: Option<PathBuf>,
        /// Campaign file, or a directory holding `campaign.toml`.
        #[arg(long)]
        campaign: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        roster: Option<Vec<String>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_passes: Option<usize>,
        /// Append-only campaign log (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tables from campaign logs (`.jsonl`) and lint reports (`.json`).
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-model cost breakdown of one or more ledgers.
    Cost {
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
        /// Finding count for the cost-per-finding line.
        #[arg(long)]
        findings: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process environment as seen by [`run`].
pub struct Env<'a> {
    pub var: &'a dyn Fn(&str) -> Option<String>,
    /// Stands in for the HTTP backend under `--live`.
    pub live_backend: Option<Arc<dyn Backend>>,
}

impl Env<'static> {
    pub fn process() -> Self {
        Env { var: &|k| std::env::var(k).ok(), live_backend: None }
    }
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Gateway(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Gateway(_) => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

type CliResult = Result<(), CliError>;

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, env: &Env<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            if informational {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };
    let result = cli
        .config
        .as_deref()
        .map_or_else(|| Ok(Config::default()), Config::load)
        .map_err(invalid)
        .and_then(|config| Runner { config, env, out }.dispatch(cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Invalid(m) | CliError::Gateway(m)) = &e;
            let _ = writeln!(err, "error: {m}");
            e.code()
        }
    }
}

struct Runner<'a, 'e> {
    config: Config,
    env: &'a Env<'e>,
    out: &'a mut dyn Write,
}

enum Mode {
    Offline,
    Replay(PathBuf),
    Live,
}

fn read_document(path: &Path) -> Result<Document, CliError> {
    let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_bytes(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CliResult {
    std::fs::write(path, content).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn label(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn in_dir(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

fn replay_dir(path: &Path) -> PathBuf {
    let nested = path.join("replay");
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignFile {
    target_id: String,
    target: Option<PathBuf>,
    roster: Vec<String>,
    k: Option<usize>,
    max_passes: Option<usize>,
    max_output_tokens: Option<u32>,
}

#[derive(Serialize)]
struct AnnotatedNode {
    path: String,
    kind: NodeKind,
    lines: String,
    role: crate::annotate::Role,
    channel: Channel,
    confidence: crate::annotate::Confidence,
}

#[derive(Serialize)]
struct AnnotateEntry {
    file: String,
    channels: BTreeMap<Channel, f64>,
    unclassified_fraction: f64,
    nodes: Vec<AnnotatedNode>,
}

#[derive(Deserialize)]
struct LintEnvelope {
    kind: String,
    report: LintBody,
}

#[derive(Deserialize)]
struct LintBody {
    patterns: Vec<InterferencePattern>,
}

impl Runner<'_, '_> {
    fn say(&mut self, s: &str) -> CliResult {
        self.out.write_all(s.as_bytes()).map_err(invalid)
    }

    fn dispatch(mut self, command: Command) -> CliResult {
        match command {
            Command::Parse { file, out } => self.parse(&file, out.as_deref()),
            Command::Profile { files, out } => self.profile(&files, out.as_deref()),
            Command::Annotate { files, lexicon, out } => self.annotate(&files, lexicon, out.as_deref()),
            Command::Diff { old, new, out } => self.diff(&old, &new, out.as_deref()),
            Command::Blocks { path, decompose, model, source_id, gateway, out } => {
                if decompose {
                    self.decompose(&path, model, source_id, &gateway, out.as_deref())
                } else {
                    self.blocks(&path, out.as_deref())
                }
            }
            Command::Lint { blocks, rules, structural_only, model, jobs, gateway, out } => {
                self.lint(&blocks, rules, structural_only, model, jobs, &gateway, out.as_deref())
            }
            Command::Scour { target, campaign, roster, k, max_passes, log, gateway, out } => {
                self.scour(target, campaign, roster, k, max_passes, log.as_deref(), &gateway, out.as_deref())
            }
            Command::Report { inputs, out } => self.report(&inputs, out.as_deref()),
            Command::Cost { ledgers, findings, out } => self.cost(&ledgers, findings, out.as_deref()),
        }
    }

    fn parse(&mut self, file: &Path, out: Option<&Path>) -> CliResult {
        let doc = read_document(file)?;
        let p = profile(&doc.root);
        self.say(&format!(
            "{}: {} lines, {} nodes, depth {}, {} diagnostics\n",
            file.display(),
            doc.line_count,
            p.node_count,
            p.max_depth,
            doc.diagnostics.len()
        ))?;
        for d in &doc.diagnostics {
            self.say(&format!("  {d}\n"))?;
        }
        if let Some(path) = out {
            write_file(path, &ast::to_json(&doc))?;
        }
        Ok(())
    }

    fn profile(&mut self, files: &[PathBuf], out: Option<&Path>) -> CliResult {
        let mut profiles = Vec::new();
        for f in files {
            profiles.push((label(f), profile(&read_document(f)?.root)));
        }
        if let [(_, p)] = profiles.as_slice() {
            self.say(&p.to_string())?;
        } else {
            let mut headers = vec!["Metric"];
            headers.extend(profiles.iter().map(|(l, _)| l.as_str()));
            let mut rows: Vec<Vec<String>> = Vec::new();
            let metric = |name: &str, get: &dyn Fn(&ast::StructuralProfile) -> usize| {
                let mut row = vec![name.to_string()];
                row.extend(profiles.iter().map(|(_, p)| get(p).to_string()));
                row
            };
            rows.push(metric("Nodes", &|p| p.node_count));
            rows.push(metric("Max depth", &|p| p.max_depth));
            rows.push(metric("Sections", &|p| p.section_count));
            rows.push(metric("Top-level directives", &|p| p.top_level_directive_count));
            for kind in NodeKind::ALL {
                rows.push(metric(kind.as_str(), &|p| p.count(kind)));
            }
            self.say(&render_table(&headers, &rows))?;
        }
        if let Some(path) = out {
            let map: BTreeMap<&str, &ast::StructuralProfile> = profiles.iter().map(|(l, p)| (l.as_str(), p)).collect();
            write_file(path, &to_json("profile", &map))?;
        }
        Ok(())
    }

    fn annotate(&mut self, files: &[PathBuf], lexicon: Option<PathBuf>, out: Option<&Path>) -> CliResult {
        let lexicon = match lexicon.or_else(|| self.config.lexicon.clone()) {
            Some(p) => Lexicon::load(&p).map_err(invalid)?,
            None => Lexicon::default(),
        };
        let mut annotated = Vec::new();
        let mut entries = Vec::new();
        for f in files {
            let doc = read_document(f)?;
            let a = annotate_with(&doc.root, &lexicon);
            let dist = channel_distribution(&a).map_err(|e| invalid(format!("{}: {e}", f.display())))?;
            let rows: Vec<Vec<String>> = Channel::ALL
                .iter()
                .map(|c| vec![c.to_string(), format!("{:.1}%", dist.fraction(*c) * 100.0)])
                .collect();
            self.say(&format!("{} ({} nodes)\n", f.display(), dist.node_count))?;
            self.say(&render_table(&["Channel", "Share"], &rows))?;
            self.say(&format!("Unclassified: {:.1}%\n\n", dist.unclassified_fraction * 100.0))?;
            let nodes = doc
                .root
                .walk()
                .filter(|(path, _)| path.depth() > 0)
                .filter_map(|(path, node)| {
                    let ann = a.annotation(&path)?;
                    Some(AnnotatedNode {
                        path: path.to_string(),
                        kind: node.kind,
                        lines: node.span.to_string(),
                        role: ann.role,
                        channel: ann.channel,
                        confidence: ann.confidence,
                    })
                })
                .collect();
            entries.push(AnnotateEntry {
                file: f.display().to_string(),
                channels: dist.fractions.clone(),
                unclassified_fraction: dist.unclassified_fraction,
                nodes,
            });
            annotated.push(a);
        }
        if annotated.len() >= 2 {
            let channels = session_variance(&annotated).map_err(invalid)?;
            let names: Vec<&str> = channels.iter().map(|c| c.as_str()).collect();
            self.say(&format!(
                "Session variance: {}\n",
                if names.is_empty() { "none".to_string() } else { names.join(", ") }
            ))?;
        }
        if let Some(path) = out {
            write_file(path, &to_json("annotate", &entries))?;
        }
        Ok(())
    }

    fn diff(&mut self, old: &Path, new: &Path, out: Option<&Path>) -> CliResult {
        let a = read_document(old)?;
        let b = read_document(new)?;
        let changes = diff(&a.root, &b.root);
        self.say(&format!("{}\n", changes.summary))?;
        for e in changes.entries.iter().filter(|e| e.kind != ChangeKind::Unchanged) {
            let show = |p: &Option<ast::NodePath>, doc: &Document| {
                p.as_ref().map_or_else(
                    || "-".to_string(),
                    |p| {
                        let node = doc.root.get(p).expect("diff path resolves");
                        format!("{p} {} {}", node.kind, node.span)
                    },
                )
            };
            self.say(&format!("{:<9} {}  ->  {}\n", e.kind.to_string(), show(&e.old, &a), show(&e.new, &b)))?;
        }
        if let Some(path) = out {
            write_file(path, &changes.to_json())?;
        }
        Ok(())
    }

    fn blocks(&mut self, path: &Path, out: Option<&Path>) -> CliResult {
        let set = load_blocks(&in_dir(path, BLOCKS_FILE)).map_err(invalid)?;
        self.say(&block_summary(&set))?;
        if let Some(p) = out {
            write_file(p, &serialize_blocks(&set))?;
        }
        Ok(())
    }

    fn mode(&self, args: &GatewayArgs, fallback_replay: Option<PathBuf>) -> Result<Mode, CliError> {
        if args.live || args.gateway == Some(GatewayKind::Live) {
            if args.replay.is_some() {
                return Err(invalid("--replay and live mode are exclusive"));
            }
            return Ok(Mode::Live);
        }
        if args.replay.is_some() || args.gateway == Some(GatewayKind::Replay) {
            let dir = args
                .replay
                .clone()
                .or_else(|| self.config.replay.clone())
                .or(fallback_replay)
                .ok_or_else(|| invalid("no replay store: pass --replay <dir>"))?;
            return Ok(Mode::Replay(replay_dir(&dir)));
        }
        Ok(Mode::Offline)
    }

    fn gateway(&self, mode: &Mode, model_ids: &[String]) -> Result<Gateway, CliError> {
        let mut specs = self.config.models.clone();
        for id in model_ids {
            if specs.iter().any(|m| &m.model_id == id) {
                continue;
            }
            if let Mode::Live = mode {
                return Err(invalid(format!("model {id:?} has no roster entry; add it to the config to go live")));
            }
            specs.push(ModelSpec::free(id.clone()));
        }
        let backend: Arc<dyn Backend> = match mode {
            Mode::Offline => Arc::new(DenyAll),
            Mode::Replay(dir) => Arc::new(ReplayStore::load_dir(dir).map_err(invalid)?),
            Mode::Live => match &self.env.live_backend {
                Some(b) => Arc::clone(b),
                None => Arc::new(LiveBackend::new(self.config.live(self.env.var).map_err(invalid)?)),
            },
        };
        Ok(Gateway::new(backend, specs).with_retry(self.config.retry))
    }

    fn finish_ledger(&self, gateway: &Gateway, args: &GatewayArgs) -> CliResult {
        if let Some(path) = &args.ledger {
            write_ledger(path, &gateway.ledger().records()).map_err(invalid)?;
        }
        Ok(())
    }

    fn decompose(
        &mut self,
        path: &Path,
        model: Option<String>,
        source_id: Option<String>,
        args: &GatewayArgs,
        out: Option<&Path>,
    ) -> CliResult {
        let doc = read_document(path)?;
        let model = model.unwrap_or_else(|| self.config.judge_model.clone());
        let mode = self.mode(args, None)?;
        if let Mode::Offline = mode {
            return Err(invalid("decomposition needs a model: pass --replay <dir> or --live"));
        }
        let gw = self.gateway(&mode, std::slice::from_ref(&model))?;
        let source_id = source_id.unwrap_or_else(|| label(path));
        let result = decompose_with_llm(&doc.root, &source_id, &gw, &model);
        self.finish_ledger(&gw, args)?;
        let set = result.map_err(|e| match e {
            DecomposeError::Gateway(g) => CliError::Gateway(g.to_string()),
            other => invalid(other),
        })?;
        self.say(&block_summary(&set))?;
        match out {
            Some(p) => write_file(p, &serialize_blocks(&set)),
            None => self.say(&serialize_blocks(&set)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lint(
        &mut self,
        blocks: &Path,
        rules: Option<String>,
        structural_only: bool,
        model: Option<String>,
        jobs: Option<usize>,
        args: &GatewayArgs,
        out: Option<&Path>,
    ) -> CliResult {
        let set = load_blocks(&in_dir(blocks, BLOCKS_FILE)).map_err(invalid)?;
        let source = match rules.as_deref() {
            Some("builtin") => RuleSource::Builtin,
            Some(p) => RuleSource::File(PathBuf::from(p)),
            None => self.config.rules.clone(),
        };
        let mut rule_set = match source {
            RuleSource::Builtin => RuleSet::builtin(),
            RuleSource::File(p) => RuleSet::load(&p).map_err(invalid)?,
        };
        if structural_only {
            rule_set = rule_set.structural_only();
        }
        let fallback = blocks.is_dir().then(|| blocks.join("replay")).filter(|p| p.is_dir());
        let mode = self.mode(args, fallback)?;
        let needs_model = rule_set.rules.iter().any(|r| r.uses_llm());
        if needs_model && matches!(mode, Mode::Offline) {
            return Err(invalid(
                "rule set calls a model: pass --replay <dir>, --live, or --structural-only",
            ));
        }
        let model = model.unwrap_or_else(|| self.config.judge_model.clone());
        let gw = self.gateway(&mode, std::slice::from_ref(&model))?;
        let options = RunOptions {
            model_id: model,
            jobs: jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        };
        let run = run_directed(&set, &rule_set, &gw, &options);
        self.finish_ledger(&gw, args)?;
        self.say(&render_patterns(&run.patterns))?;
        let r = &run.report;
        self.say(&format!(
            "{} blocks, {} rules, search space {}, {} pre-filtered pairs, {} model calls\n",
            r.blocks,
            r.rules.len(),
            r.search_space,
            r.prefiltered(),
            r.llm_calls
        ))?;
        if let Some(path) = out {
            write_file(path, &to_json("lint", &run))?;
        }
        if let Some(first) = r.errors.first() {
            return Err(CliError::Gateway(format!(
                "{} pair evaluation(s) failed; first: {} {}/{}: {}",
                r.errors.len(),
                first.rule_id,
                first.block_a,
                first.block_b,
                first.message
            )));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn scour(
        &mut self,
        target: Option<PathBuf>,
        campaign: Option<PathBuf>,
        roster: Option<Vec<String>>,
        k: Option<usize>,
        max_passes: Option<usize>,
        log: Option<&Path>,
        args: &GatewayArgs,
        out: Option<&Path>,
    ) -> CliResult {
        let campaign_path = campaign
            .map(|p| in_dir(&p, CAMPAIGN_FILE))
            .or_else(|| args.replay.as_ref().map(|d| d.join(CAMPAIGN_FILE)).filter(|p| p.is_file()));
        let (file, base) = match &campaign_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                let file: CampaignFile = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
                (Some(file), p.parent().map(Path::to_path_buf))
            }
            None => (None, None),
        };
        let target_path = target
            .or_else(|| {
                let f = file.as_ref()?;
                Some(base.clone().unwrap_or_default().join(f.target.clone().unwrap_or_else(|| "target.md".into())))
            })
            .ok_or_else(|| invalid("no target: pass a prompt file or --campaign"))?;
        let target_text = std::fs::read_to_string(&target_path)
            .map_err(|e| invalid(format!("{}: {e}", target_path.display())))?;
        let roster = roster
            .or_else(|| file.as_ref().map(|f| f.roster.clone()))
            .unwrap_or_else(|| self.config.models.iter().map(|m| m.model_id.clone()).collect());
        let config = CampaignConfig {
            target_id: file.as_ref().map_or_else(|| label(&target_path), |f| f.target_id.clone()),
            k: k.or(file.as_ref().and_then(|f| f.k)).unwrap_or(self.config.scour.k),
            max_passes: max_passes
                .or(file.as_ref().and_then(|f| f.max_passes))
                .unwrap_or(self.config.scour.max_passes),
            max_output_tokens: file
                .as_ref()
                .and_then(|f| f.max_output_tokens)
                .or(self.config.scour.max_output_tokens),
            roster,
        };
        let mode = self.mode(args, None)?;
        if let Mode::Offline = mode {
            return Err(invalid("scouring needs models: pass --replay <dir> or --live"));
        }
        let gw = self.gateway(&mode, &config.roster)?;
        let mut log_file = match log {
            Some(p) => Some(std::io::BufWriter::new(
                std::fs::File::create(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
            )),
            None => None,
        };
        let mut log_error = None;
        let mut sink = |event: &LogEvent| {
            if let Some(f) = log_file.as_mut() {
                let line = serde_json::to_string(event).expect("log event serializes");
                if let Err(e) = writeln!(f, "{line}") {
                    log_error.get_or_insert(e);
                }
            }
        };
        let result = run_campaign(&target_text, &config, &gw, &mut sink);
        if let Some(mut f) = log_file {
            if let Err(e) = f.flush() {
                log_error.get_or_insert(e);
            }
        }
        if let Some(e) = log_error {
            return Err(invalid(format!("cannot write campaign log: {e}")));
        }
        self.finish_ledger(&gw, args)?;
        let campaign = result.map_err(invalid)?;
        let report = campaign_report(&campaign);
        self.say(&report.to_string())?;
        if let Some(path) = out {
            write_file(path, &to_json("campaign", &report))?;
        }
        if campaign.status == CampaignStatus::Aborted {
            return Err(CliError::Gateway(campaign.error.unwrap_or_else(|| "campaign aborted".into())));
        }
        Ok(())
    }

    fn report(&mut self, inputs: &[PathBuf], out: Option<&Path>) -> CliResult {
        let mut campaigns = Vec::new();
        let mut lint = Vec::new();
        for path in inputs {
            if path.extension().is_some_and(|e| e == "jsonl") {
                let c = load_campaign_log(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                campaigns.push(campaign_report(&c));
            } else {
                let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                let env: LintEnvelope =
                    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                if env.kind != "lint" {
                    return Err(invalid(format!("{}: expected a lint report, found {:?}", path.display(), env.kind)));
                }
                lint.push((path.display().to_string(), env.report.patterns));
            }
        }
        for (i, c) in campaigns.iter().enumerate() {
            if i > 0 {
                self.say("\n")?;
            }
            self.say(&c.to_string())?;
        }
        if campaigns.len() >= 2 {
            let mut headers = vec!["Severity"];
            headers.extend(campaigns.iter().map(|c| c.target_id.as_str()));
            let rows: Vec<Vec<String>> = SeverityScale::Epistemic
                .levels()
                .iter()
                .map(|l| {
                    let mut row = vec![l.as_str().to_string()];
                    row.extend(campaigns.iter().map(|c| {
                        format!("{} ({}%)", c.severity.count(l.as_str()), c.severity.percent(l.as_str()))
                    }));
                    row
                })
                .collect();
            self.say("\nSeverity by target\n")?;
            self.say(&render_table(&headers, &rows))?;
        }
        for (name, patterns) in &lint {
            self.say(&format!("{name}\n"))?;
            self.say(&render_patterns(patterns))?;
        }
        if let Some(path) = out {
            #[derive(Serialize)]
            struct Combined<'a> {
                campaigns: &'a [CampaignReport],
                patterns: Vec<PatternSummary>,
            }
            let combined = Combined {
                campaigns: &campaigns,
                patterns: lint.iter().map(|(_, p)| pattern_summary(p)).collect(),
            };
            write_file(path, &to_json("report", &combined))?;
        }
        Ok(())
    }

    fn cost(&mut self, ledgers: &[PathBuf], findings: Option<usize>, out: Option<&Path>) -> CliResult {
        let mut records = Vec::new();
        for path in ledgers {
            records.extend(load_ledger(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?);
        }
        let breakdown = cost_breakdown(&records, findings.unwrap_or(0));
        self.say(&breakdown.to_string())?;
        if let Some(path) = out {
            write_file(path, &to_json("cost", &breakdown))?;
        }
        Ok(())
    }
}

fn block_summary(set: &BlockSet) -> String {
    let mut out = format!("{}: {} blocks\n", set.source_id, set.len());
    let count = |t: Tier, m: Modality| set.blocks.iter().filter(|b| b.tier == t && b.modality == m).count();
    let mut headers = vec!["Tier"];
    headers.extend(Modality::ALL.iter().map(|m| m.as_str()));
    let rows: Vec<Vec<String>> = [Tier::System, Tier::Domain, Tier::Application]
        .iter()
        .map(|t| {
            let mut row = vec![t.as_str().to_string()];
            row.extend(Modality::ALL.iter().map(|m| count(*t, *m).to_string()));
            row
        })
        .collect();
    out.push_str(&render_table(&headers, &rows));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("promptlens").chain(args.iter().copied()),
            &mut out,
            &mut err,
            &Env { var: &|_| None, live_backend: None },
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (code, out, err) = run_args(&["frobnicate"]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
        assert!(err.contains("Usage"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_args(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("scour"));
    }

    #[test]
    fn missing_file_is_validation_error() {
        let (code, _, err) = run_args(&["parse", "/nonexistent/prompt.md"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error:"), "{err}");
    }

    #[test]
    fn live_requires_credential() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("t.md");
        std::fs::write(&target, "You are an agent.").unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(
            &cfg,
            "[[models]]\nmodel_id = \"m\"\nprovider_route = \"r/m\"\nprice_in = \"0\"\nprice_out = \"0\"\n",
        )
        .unwrap();
        let (code, _, err) =
            run_args(&["--config", cfg.to_str().unwrap(), "scour", target.to_str().unwrap(), "--live"]);
        assert_eq!(code, 1);
        assert!(err.contains("OPENROUTER_API_KEY"), "{err}");
    }
}
