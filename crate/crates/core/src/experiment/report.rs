use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analyzer::{AnalysisReport, Ratio};
use crate::gateway::{Fallback, Mode};
use crate::prompt::Strategy;
use crate::toolchain::{Metric, TestTally, ToolLog};
use crate::workspace::Phase;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The seven per-cell measurements. Each one is a value, skipped, or an
/// error entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub runs_successfully: Metric<bool>,
    pub tests: Metric<TestTally>,
    pub lint_score: Metric<f64>,
    pub typecheck_errors: Metric<u32>,
    pub migrated_columns: Metric<Ratio>,
    pub migrated_methods: Metric<Ratio>,
    pub migrated_tests: Metric<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FileStatus {
    Applied {
        request_digest: String,
        fallback: Fallback,
    },
    /// Whitespace-only files are not sent.
    SkippedEmpty,
    Failed {
        stage: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileOutcome {
    pub path: String,
    #[serde(flatten)]
    pub status: FileStatus,
}

impl FileOutcome {
    pub fn failed(&self) -> bool {
        matches!(self.status, FileStatus::Failed { .. })
    }
}

/// Everything measured on one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEvaluation {
    pub metrics: MetricSet,
    pub workspace_digest: String,
    #[serde(default)]
    pub analysis: Option<AnalysisReport>,
    pub tool_logs: BTreeMap<String, ToolLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellStatus {
    Completed,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: Strategy,
    pub phase: Phase,
    #[serde(flatten)]
    pub status: CellStatus,
    pub origin_digest: Option<String>,
    pub dependency_manifest: Metric<String>,
    pub files: Vec<FileOutcome>,
    pub evaluation: Option<TreeEvaluation>,
}

impl CellReport {
    pub fn completed(&self) -> bool {
        self.status == CellStatus::Completed
    }

    pub fn metrics(&self) -> Option<&MetricSet> {
        self.evaluation.as_ref().map(|e| &e.metrics)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    PreMigration,
    ManualMigration,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::PreMigration => "pre-migration",
            BaselineKind::ManualMigration => "manual-migration",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::PreMigration => "Before Migration",
            BaselineKind::ManualMigration => "Manual Migration",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub kind: BaselineKind,
    #[serde(flatten)]
    pub status: CellStatus,
    pub evaluation: Option<TreeEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostFixReport {
    pub strategy: Strategy,
    pub phase: Phase,
    pub note: Option<String>,
    pub overlaid_files: Vec<String>,
    #[serde(flatten)]
    pub status: CellStatus,
    pub evaluation: Option<TreeEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub harness_version: String,
    pub model_id: String,
    pub temperature: f64,
    pub mode: Mode,
    pub targets_manifest_digest: String,
    pub tool_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub strategies: Vec<Strategy>,
    pub phases: Vec<Phase>,
    pub cells: Vec<CellReport>,
    pub baselines: Vec<BaselineReport>,
    pub post_fix: Option<PostFixReport>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn cell(&self, strategy: Strategy, phase: Phase) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.strategy == strategy && c.phase == phase)
    }

    pub fn all_cells_completed(&self) -> bool {
        self.cells.iter().all(CellReport::completed)
            && self.baselines.iter().all(|b| b.status == CellStatus::Completed)
            && self.post_fix.as_ref().is_none_or(|p| p.status == CellStatus::Completed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}` (expected json or markdown)")),
        }
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serializes");
            text.push('\n');
            text
        }
        ReportFormat::Markdown => markdown(report),
    }
}

pub fn parse_report(json: &str) -> Result<ExperimentReport, serde_json::Error> {
    serde_json::from_str(json)
}

const APPLICATION_HEADER: [&str; 6] = [
    "Runs Successfully",
    "Tests",
    "Pylint",
    "Pyright",
    "Migrated Columns",
    "Migrated Methods",
];
const TESTS_HEADER: [&str; 2] = ["Migrated Tests", "Tests that Pass"];

fn markdown(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for (i, phase) in report.phases.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let (title, header): (&str, &[&str]) = match phase {
            Phase::Application => ("Application Migration Results", &APPLICATION_HEADER),
            Phase::Tests => ("Tests Migration Results", &TESTS_HEADER),
        };
        let _ = writeln!(out, "## {title}\n");
        let _ = writeln!(out, "| Metrics | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));

        for b in &report.baselines {
            row(&mut out, b.kind.label(), *phase, b.evaluation.as_ref(), header.len());
        }
        for cell in report.cells.iter().filter(|c| c.phase == *phase) {
            row(&mut out, cell.strategy.label(), *phase, cell.evaluation.as_ref(), header.len());
        }
        if let Some(fix) = report.post_fix.as_ref().filter(|f| f.phase == *phase) {
            let label = format!("{} (post-fix)", fix.strategy.label());
            row(&mut out, &label, *phase, fix.evaluation.as_ref(), header.len());
        }
    }
    out
}

fn row(out: &mut String, label: &str, phase: Phase, eval: Option<&TreeEvaluation>, width: usize) {
    let cells: Vec<String> = match eval {
        None => vec!["error".to_string(); width],
        Some(e) => {
            let m = &e.metrics;
            match phase {
                Phase::Application => vec![
                    show(&m.runs_successfully, |v| if *v { "Yes" } else { "No" }.to_string()),
                    show(&m.tests, |t| format!("{}/{}", t.passed, t.total)),
                    show(&m.lint_score, |s| format!("{s:.2}/10")),
                    show(&m.typecheck_errors, |n| format!("{n} error{}", if *n == 1 { "" } else { "s" })),
                    show(&m.migrated_columns, Ratio::to_string),
                    show(&m.migrated_methods, Ratio::to_string),
                ],
                Phase::Tests => vec![
                    show(&m.migrated_tests, Ratio::to_string),
                    show(&m.tests, |t| format!("{}/{}", t.passed, t.total)),
                ],
            }
        }
    };
    let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
}

fn show<T>(metric: &Metric<T>, fmt: impl Fn(&T) -> String) -> String {
    match metric {
        Metric::Ok { value } => fmt(value),
        Metric::Skipped => "-".to_string(),
        Metric::Error { .. } => "error".to_string(),
    }
}
