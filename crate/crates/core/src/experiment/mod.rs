//! Drives the strategy × phase matrix: stage, prompt per file, apply,
//! analyze, check, and aggregate into a report.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analyzer::{analyze_tree, TargetsManifest};
use crate::gateway::{
    extract_code, CompletionRequest, Endpoint, Gateway, GatewayError, Mode, ReplayStore, UreqTransport,
};
use crate::prompt::{render, PromptError, PromptTemplate, Strategy};
use crate::toolchain::{expand_placeholders, run_tool, Metric, ToolInvocation};
use crate::workspace::{Phase, TestGlobs, Workspace, WorkspaceError};

pub use config::{ExperimentConfig, PostFix, TemplateOverrides};
pub use report::{
    emit_report, parse_report, BaselineKind, BaselineReport, CellReport, CellStatus, ExperimentReport, FileOutcome,
    FileStatus, MetricSet, PostFixReport, Provenance, ReportFormat, TreeEvaluation, REPORT_SCHEMA_VERSION,
};

pub const REPORT_FILE: &str = "report.json";
pub const MARKDOWN_FILE: &str = "report.md";
pub const META_FILE: &str = "meta.json";
pub const WORKSPACES_DIR: &str = "workspaces";
const RUN_MARKER: &str = ".migrate-run";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("output directory {path}: {reason}")]
    Output { path: PathBuf, reason: String },
}

/// Everything a cell needs that is shared across cells.
pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub gateway: &'a Gateway,
    pub mode: Mode,
    pub template: PromptTemplate,
    pub manifest: TargetsManifest,
    pub globs: TestGlobs,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a ExperimentConfig, gateway: &'a Gateway, mode: Mode) -> Result<Self, ExperimentError> {
        config.check_mode(mode)?;
        let manifest = TargetsManifest::load(&config.resolve(&config.targets_manifest))
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(Context {
            config,
            gateway,
            mode,
            template: config.template()?,
            manifest,
            globs: config.test_globs()?,
        })
    }

    fn project_root(&self) -> PathBuf {
        self.config.resolve(&self.config.project_root)
    }

    fn manual_root(&self) -> Option<PathBuf> {
        self.config.manual_baseline.as_ref().map(|p| self.config.resolve(p))
    }
}

/// The gateway for `mode`. Replay never gets a network transport.
pub fn build_gateway(config: &ExperimentConfig, mode: Mode) -> Result<Gateway, ExperimentError> {
    config.check_mode(mode)?;
    let store = config.replay_store.as_ref().map(|p| ReplayStore::open(config.resolve(p)));
    Ok(match mode {
        Mode::Replay => Gateway::replay_only(store.expect("checked above")),
        Mode::Record | Mode::Live => {
            let gw = Gateway::new(Box::new(UreqTransport::default())).with_endpoint(Endpoint::from_env());
            match store {
                Some(s) => gw.with_store(s),
                None => gw,
            }
        }
    })
}

pub fn cell_name(strategy: Strategy, phase: Phase) -> String {
    format!("{}-{}", strategy.as_str(), phase.as_str())
}

/// Result of one (strategy, phase) cell together with its workspace.
pub struct PhaseRun {
    pub workspace: Workspace,
    pub report: CellReport,
}

/// Stages the composite tree for `phase`, migrates every file of the phase
/// partition, then analyzes and checks the result. Per-file failures are
/// recorded and the remaining files still run.
pub fn run_phase(ctx: &Context, strategy: Strategy, phase: Phase, dest: &Path) -> Result<PhaseRun, ExperimentError> {
    let project = ctx.project_root();
    let mut ws = match (phase, ctx.manual_root()) {
        (Phase::Application, Some(manual)) => Workspace::stage_composite(&project, Some((&manual, &ctx.globs)), dest)?,
        (Phase::Application, None) => Workspace::stage(&project, dest)?,
        (Phase::Tests, Some(manual)) => Workspace::stage_composite(&manual, Some((&project, &ctx.globs)), dest)?,
        (Phase::Tests, None) => return Err(ExperimentError::Config("the tests phase needs manual_baseline".into())),
    };

    let dependency_manifest = if ctx.config.dependency_edits.is_empty() {
        Metric::Skipped
    } else {
        match ws.apply_dependency_edits(&ctx.config.dependency_edits) {
            Ok(kind) => Metric::Ok {
                value: kind.file_name().to_string(),
            },
            Err(e) => Metric::error(e),
        }
    };

    let partition = ws.partition(phase, &ctx.globs)?;
    let mut files = Vec::with_capacity(partition.included.len());
    for rel in &partition.included {
        let status = migrate_file(ctx, &mut ws, strategy, rel);
        if let FileStatus::Failed { stage, message } = &status {
            log::warn!("{}: {rel}: {stage} failed: {message}", cell_name(strategy, phase));
        }
        files.push(FileOutcome {
            path: rel.clone(),
            status,
        });
    }

    let vars = placeholder_vars(ctx.config, &ws, &cell_name(strategy, phase), strategy.as_str(), phase.as_str());
    let evaluation = evaluate(ctx, &ws, &vars)?;
    let report = CellReport {
        strategy,
        phase,
        status: CellStatus::Completed,
        origin_digest: Some(ws.origin_digest().to_string()),
        dependency_manifest,
        files,
        evaluation: Some(evaluation),
    };
    Ok(PhaseRun { workspace: ws, report })
}

fn migrate_file(ctx: &Context, ws: &mut Workspace, strategy: Strategy, rel: &str) -> FileStatus {
    let fail = |stage: &str, e: &dyn std::fmt::Display| FileStatus::Failed {
        stage: stage.to_string(),
        message: e.to_string(),
    };
    let code = match ws.read_file(rel) {
        Ok(c) => c,
        Err(e) => return fail("read", &e),
    };
    if code.trim().is_empty() {
        return FileStatus::SkippedEmpty;
    }
    let prompt = match render(strategy, &ctx.template, &code) {
        Ok(p) => p,
        Err(e) => return fail("render", &e),
    };
    let request = match CompletionRequest::new(&ctx.config.model_id, &prompt.system_message, &prompt.user_message)
        .and_then(|r| r.with_temperature(ctx.config.temperature))
    {
        Ok(r) => r,
        Err(e) => return fail("request", &e),
    };
    let request_digest = request.digest();
    let completion = match ctx.gateway.complete(&request, ctx.mode) {
        Ok(c) => c,
        Err(e @ GatewayError::ReplayMiss { .. }) => return fail("replay", &e),
        Err(e) => return fail("complete", &e),
    };
    let extracted = match extract_code(&completion.raw, ctx.template.start_marker(), ctx.template.end_marker()) {
        Ok(x) => x,
        Err(e) => return fail("extract", &e),
    };
    let mut text = extracted.code;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match ws.apply_file(rel, &text) {
        Ok(()) => FileStatus::Applied {
            request_digest,
            fallback: extracted.fallback_used,
        },
        Err(e) => fail("apply", &e),
    }
}

fn placeholder_vars(
    config: &ExperimentConfig,
    ws: &Workspace,
    cell: &str,
    strategy: &str,
    phase: &str,
) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("workspace", ws.root().display().to_string()),
        ("config_dir", config.base_dir.display().to_string()),
        ("cell", cell.to_string()),
        ("strategy", strategy.to_string()),
        ("phase", phase.to_string()),
    ])
}

/// Analyzer ratios plus the toolchain checks on the workspace as it is now.
fn evaluate(ctx: &Context, ws: &Workspace, vars: &BTreeMap<&str, String>) -> Result<TreeEvaluation, ExperimentError> {
    // digest before the tools run: they leave caches behind
    let workspace_digest = ws.tree_digest()?;
    let (analysis, columns, methods, tests) = match analyze_tree(ws.root(), &ctx.manifest) {
        Ok(a) => {
            let s = a.summary.clone();
            (
                Some(a),
                Metric::Ok { value: s.columns },
                Metric::Ok { value: s.methods },
                Metric::Ok { value: s.tests },
            )
        }
        Err(e) => (None, Metric::error(&e), Metric::error(&e), Metric::error(&e)),
    };
    let checks = ctx.config.tools.run_checks(ws.root(), vars);
    Ok(TreeEvaluation {
        metrics: MetricSet {
            runs_successfully: checks.runs_successfully,
            tests: checks.tests,
            lint_score: checks.lint_score,
            typecheck_errors: checks.typecheck_errors,
            migrated_columns: columns,
            migrated_methods: methods,
            migrated_tests: tests,
        },
        workspace_digest,
        analysis,
        tool_logs: checks.raw_logs,
    })
}

fn run_baseline(ctx: &Context, kind: BaselineKind, dest: &Path) -> BaselineReport {
    let root = match kind {
        BaselineKind::PreMigration => Some(ctx.project_root()),
        BaselineKind::ManualMigration => ctx.manual_root(),
    };
    let result = root
        .ok_or_else(|| ExperimentError::Config("manual_baseline is not configured".into()))
        .and_then(|root| Ok(Workspace::stage(&root, dest)?))
        .and_then(|ws| {
            let name = format!("baseline-{}", kind.as_str());
            let vars = placeholder_vars(ctx.config, &ws, &name, kind.as_str(), "baseline");
            evaluate(ctx, &ws, &vars)
        });
    match result {
        Ok(evaluation) => BaselineReport {
            kind,
            status: CellStatus::Completed,
            evaluation: Some(evaluation),
        },
        Err(e) => BaselineReport {
            kind,
            status: CellStatus::Failed { message: e.to_string() },
            evaluation: None,
        },
    }
}

fn run_post_fix(ctx: &Context, fix: &PostFix, cell_root: &Path, dest: &Path) -> PostFixReport {
    let name = format!("post-fix-{}", cell_name(fix.strategy, fix.phase));
    let result = (|| {
        let mut ws = Workspace::stage(cell_root, dest)?;
        let overlaid = ws.overlay(&ctx.config.resolve(&fix.overlay))?;
        let vars = placeholder_vars(ctx.config, &ws, &name, fix.strategy.as_str(), fix.phase.as_str());
        Ok::<_, ExperimentError>((overlaid, evaluate(ctx, &ws, &vars)?))
    })();
    let (overlaid_files, status, evaluation) = match result {
        Ok((files, eval)) => (files, CellStatus::Completed, Some(eval)),
        Err(e) => (Vec::new(), CellStatus::Failed { message: e.to_string() }, None),
    };
    PostFixReport {
        strategy: fix.strategy,
        phase: fix.phase,
        note: fix.note.clone(),
        overlaid_files,
        status,
        evaluation,
    }
}

/// Which strategies and phases to run; `None` means everything configured.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub strategies: Option<Vec<Strategy>>,
    pub phases: Option<Vec<Phase>>,
}

/// Runs every selected cell plus the baselines and the optional post-fix,
/// each in its own workspace under `workspaces_dir`.
pub fn run_experiment(
    ctx: &Context,
    selection: &Selection,
    workspaces_dir: &Path,
) -> Result<ExperimentReport, ExperimentError> {
    let config = ctx.config;
    let pick = |all: &[Strategy], chosen: &Option<Vec<Strategy>>| -> Result<Vec<Strategy>, ExperimentError> {
        match chosen {
            None => Ok(all.to_vec()),
            Some(c) => {
                if let Some(bad) = c.iter().find(|s| !all.contains(s)) {
                    return Err(ExperimentError::Config(format!("strategy {} is not configured", bad.as_str())));
                }
                Ok(all.iter().copied().filter(|s| c.contains(s)).collect())
            }
        }
    };
    let strategies = pick(&config.strategies, &selection.strategies)?;
    let phases: Vec<Phase> = match &selection.phases {
        None => config.phases.clone(),
        Some(c) => {
            if let Some(bad) = c.iter().find(|p| !config.phases.contains(p)) {
                return Err(ExperimentError::Config(format!("phase {} is not configured", bad.as_str())));
            }
            config.phases.iter().copied().filter(|p| c.contains(p)).collect()
        }
    };
    std::fs::create_dir_all(workspaces_dir).map_err(|e| ExperimentError::Output {
        path: workspaces_dir.to_path_buf(),
        reason: e.to_string(),
    })?;

    let cells: Vec<(Strategy, Phase)> = phases
        .iter()
        .flat_map(|p| strategies.iter().map(move |s| (*s, *p)))
        .collect();
    let reports: Mutex<BTreeMap<usize, CellReport>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let jobs = config.jobs.unwrap_or(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(strategy, phase)) = cells.get(i) else { break };
                let dest = workspaces_dir.join(cell_name(strategy, phase));
                let report = match run_phase(ctx, strategy, phase, &dest) {
                    Ok(run) => run.report,
                    Err(e) => {
                        log::error!("{}: {e}", cell_name(strategy, phase));
                        CellReport {
                            strategy,
                            phase,
                            status: CellStatus::Failed { message: e.to_string() },
                            origin_digest: None,
                            dependency_manifest: Metric::Skipped,
                            files: Vec::new(),
                            evaluation: None,
                        }
                    }
                };
                reports.lock().expect("no poisoned cells").insert(i, report);
            });
        }
    });
    let cells: Vec<CellReport> = reports.into_inner().expect("no poisoned cells").into_values().collect();

    let mut baselines = vec![run_baseline(
        ctx,
        BaselineKind::PreMigration,
        &workspaces_dir.join("baseline-pre-migration"),
    )];
    if config.manual_baseline.is_some() {
        baselines.push(run_baseline(
            ctx,
            BaselineKind::ManualMigration,
            &workspaces_dir.join("baseline-manual-migration"),
        ));
    }

    let post_fix = config.post_fix.as_ref().and_then(|fix| {
        let done = cells
            .iter()
            .find(|c| c.strategy == fix.strategy && c.phase == fix.phase && c.completed())?;
        let cell_root = workspaces_dir.join(cell_name(done.strategy, done.phase));
        let dest = workspaces_dir.join(format!("post-fix-{}", cell_name(fix.strategy, fix.phase)));
        Some(run_post_fix(ctx, fix, &cell_root, &dest))
    });

    Ok(ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        strategies,
        phases,
        cells,
        baselines,
        post_fix,
        provenance: Provenance {
            harness_version: env!("CARGO_PKG_VERSION").to_string(),
            model_id: config.model_id.clone(),
            temperature: config.temperature,
            mode: ctx.mode,
            targets_manifest_digest: hex::encode(Sha256::digest(ctx.manifest.to_toml().as_bytes())),
            tool_versions: tool_versions(config),
        },
    })
}

fn tool_versions(config: &ExperimentConfig) -> BTreeMap<String, String> {
    let vars = BTreeMap::from([("config_dir", config.base_dir.display().to_string())]);
    config
        .tool_versions
        .iter()
        .map(|(name, argv)| {
            let version = ToolInvocation::new(expand_placeholders(argv, &vars), &config.base_dir)
                .and_then(|inv| inv.with_timeout(Duration::from_secs(30)))
                .and_then(|inv| run_tool(&inv))
                .map(|run| run.combined().lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string())
                .unwrap_or_else(|e| format!("unavailable: {e}"));
            (name.clone(), version)
        })
        .collect()
}

/// Prepares `out` for a run: it must be absent, empty, or a previous run
/// directory, whose workspaces are then cleared.
pub fn prepare_output_dir(out: &Path) -> Result<(), ExperimentError> {
    let err = |reason: String| ExperimentError::Output {
        path: out.to_path_buf(),
        reason,
    };
    if out.exists() {
        let empty = std::fs::read_dir(out).map_err(|e| err(e.to_string()))?.next().is_none();
        if !empty && !out.join(RUN_MARKER).exists() {
            return Err(err("exists, is not empty and is not a previous run directory".into()));
        }
        let ws = out.join(WORKSPACES_DIR);
        if ws.exists() {
            std::fs::remove_dir_all(&ws).map_err(|e| err(e.to_string()))?;
        }
    }
    std::fs::create_dir_all(out).map_err(|e| err(e.to_string()))?;
    std::fs::write(out.join(RUN_MARKER), "").map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// Writes the JSON and markdown reports into `out`.
pub fn persist_report(report: &ExperimentReport, out: &Path) -> Result<(), ExperimentError> {
    for (file, format) in [(REPORT_FILE, ReportFormat::Json), (MARKDOWN_FILE, ReportFormat::Markdown)] {
        let path = out.join(file);
        std::fs::write(&path, emit_report(report, format)).map_err(|e| ExperimentError::Output {
            path,
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

pub fn load_report(run_dir: &Path) -> Result<ExperimentReport, ExperimentError> {
    let path = run_dir.join(REPORT_FILE);
    let err = |reason: String| ExperimentError::Output {
        path: path.clone(),
        reason,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
    parse_report(&text).map_err(|e| err(e.to_string()))
}

/// One request written by [`seed_replay_store`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct SeededRequest {
    pub cell: String,
    pub path: String,
    pub digest: String,
}

/// Fills the replay store from canned responses laid out as
/// `<responses>/<strategy>/<path of the subject file>.txt`.
///
/// Every cell is staged exactly as a run would stage it, so the stored
/// request digests are the ones the run will look up. Files without a
/// response are returned as missing and left out of the store.
pub fn seed_replay_store(
    config: &ExperimentConfig,
    responses: &Path,
    created_at: &str,
) -> Result<(Vec<SeededRequest>, Vec<SeededRequest>), ExperimentError> {
    config.check_mode(Mode::Replay)?;
    let store = ReplayStore::open(config.resolve(config.replay_store.as_ref().expect("checked above")));
    let gateway = Gateway::replay_only(store.clone());
    let ctx = Context::new(config, &gateway, Mode::Replay)?;
    let scratch = tempfile::tempdir().map_err(|e| ExperimentError::Output {
        path: std::env::temp_dir(),
        reason: e.to_string(),
    })?;

    let mut seeded = Vec::new();
    let mut missing = Vec::new();
    for &phase in &config.phases {
        for &strategy in &config.strategies {
            let cell = cell_name(strategy, phase);
            let dest = scratch.path().join(&cell);
            let mut ws = match (phase, ctx.manual_root()) {
                (Phase::Application, Some(m)) => Workspace::stage_composite(&ctx.project_root(), Some((&m, &ctx.globs)), &dest)?,
                (Phase::Application, None) => Workspace::stage(&ctx.project_root(), &dest)?,
                (Phase::Tests, Some(m)) => Workspace::stage_composite(&m, Some((&ctx.project_root(), &ctx.globs)), &dest)?,
                (Phase::Tests, None) => return Err(ExperimentError::Config("the tests phase needs manual_baseline".into())),
            };
            for rel in ws.partition(phase, &ctx.globs)?.included {
                let code = ws.read_file(&rel)?;
                if code.trim().is_empty() {
                    continue;
                }
                let prompt = render(strategy, &ctx.template, &code)?;
                let request = CompletionRequest::new(&config.model_id, &prompt.system_message, &prompt.user_message)
                    .and_then(|r| r.with_temperature(config.temperature))
                    .map_err(|e| ExperimentError::Config(e.to_string()))?;
                let entry = SeededRequest {
                    cell: cell.clone(),
                    path: rel.clone(),
                    digest: request.digest(),
                };
                let response_path = responses.join(strategy.as_str()).join(format!("{rel}.txt"));
                match std::fs::read_to_string(&response_path) {
                    Ok(raw) => {
                        store.put(&request, &raw, created_at).map_err(|e| ExperimentError::Output {
                            path: store.dir().to_path_buf(),
                            reason: e.to_string(),
                        })?;
                        seeded.push(entry);
                    }
                    Err(_) => missing.push(entry),
                }
            }
        }
    }
    Ok((seeded, missing))
}
