//! Structural migration metrics over parsed Python sources.
//!
//! Detection is purely syntactic: a column counts as migrated when its value
//! is a `mapped_column(...)` call and its annotation is `Mapped[...]`,
//! whatever module those names were imported from.

mod manifest;
mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{ColumnTarget, MethodTarget, TargetsManifest, TestTarget};
pub use model::{
    callee_tail, module_name, parse_file, parse_sources, Attribute, CallSite, ClassDef, FileModel,
    FunctionDef, Import, Param, ParamKind, ParseFailure, SourceModel,
};

use crate::workspace::{self, WorkspaceError, SUBJECT_EXTENSION};

/// The only module `create_async_engine` may be imported from.
pub const ASYNC_EXTENSION_MODULE: &str = "sqlalchemy.ext.asyncio";

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("invalid targets manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub migrated: usize,
    pub total: usize,
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.migrated, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnStatus {
    pub class_name: String,
    pub attribute_name: String,
    pub resolved: bool,
    pub uses_mapped_column_call: bool,
    pub has_mapped_annotation: bool,
    pub migrated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodStatus {
    pub qualified_name: String,
    pub resolved: bool,
    pub fully_typed: bool,
    pub async_ok: bool,
    pub migrated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestStatus {
    pub name: String,
    pub resolved: bool,
    pub is_async: bool,
    pub awaits_present: bool,
    pub migrated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegacyKind {
    QueryCall,
    SessionmakerUse,
    SchemaColumn,
    SyncEngine,
    WrongImport,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LegacyFinding {
    pub path: String,
    pub line: usize,
    pub kind: LegacyKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Column,
    Method,
    Test,
}

/// A manifest entry that could not be matched to exactly one definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub category: Category,
    pub identity: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub columns: Ratio,
    pub methods: Ratio,
    pub tests: Ratio,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub summary: Summary,
    pub columns: Vec<ColumnStatus>,
    pub methods: Vec<MethodStatus>,
    pub tests: Vec<TestStatus>,
    pub findings: Vec<LegacyFinding>,
    pub discrepancies: Vec<Discrepancy>,
    pub parse_errors: Vec<ParseFailure>,
}

enum Lookup<'m, T> {
    Found(&'m T),
    Missing,
    Ambiguous(usize),
}

impl<T> Lookup<'_, T> {
    fn reason(&self) -> Option<String> {
        match self {
            Lookup::Found(_) => None,
            Lookup::Missing => Some("not found".into()),
            Lookup::Ambiguous(n) => Some(format!("ambiguous ({n} candidates)")),
        }
    }
}

fn dotted_suffix(full: &str, wanted: &str) -> bool {
    full == wanted || (full.len() > wanted.len() && full.ends_with(wanted) && full[..full.len() - wanted.len()].ends_with('.'))
}

/// Exact full-name matches win; otherwise `wanted` must be a unique dotted
/// suffix of a full name.
fn lookup<'m, T>(candidates: Vec<(String, &'m T)>, wanted: &str) -> Lookup<'m, T> {
    let exact: Vec<_> = candidates.iter().filter(|(full, _)| full == wanted).collect();
    let pool: Vec<_> = if exact.is_empty() {
        candidates.iter().filter(|(full, _)| dotted_suffix(full, wanted)).collect()
    } else {
        exact
    };
    match pool.as_slice() {
        [] => Lookup::Missing,
        [(_, item)] => Lookup::Found(item),
        many => Lookup::Ambiguous(many.len()),
    }
}

fn find_function<'m>(model: &'m SourceModel, wanted: &str) -> Lookup<'m, FunctionDef> {
    let candidates = model
        .files
        .iter()
        .flat_map(|f| f.functions.iter().map(move |d| (f.function_full_name(d), d)))
        .collect();
    lookup(candidates, wanted)
}

fn find_class<'m>(model: &'m SourceModel, wanted: &str) -> Lookup<'m, ClassDef> {
    let candidates = model
        .files
        .iter()
        .flat_map(|f| f.classes.iter().map(move |c| (f.class_full_name(c), c)))
        .collect();
    lookup(candidates, wanted)
}

/// Head of an annotation such as `orm.Mapped[int]` is `Mapped`.
fn is_mapped_annotation(annotation: &str) -> bool {
    let compact: String = annotation.chars().filter(|c| !c.is_whitespace()).collect();
    match compact.split_once('[') {
        Some((head, _)) => compact.ends_with(']') && callee_tail(head) == "Mapped",
        None => false,
    }
}

pub fn analyze_columns(model: &SourceModel, manifest: &TargetsManifest) -> (Vec<ColumnStatus>, Vec<Discrepancy>) {
    let mut statuses = Vec::new();
    let mut discrepancies = Vec::new();
    for target in &manifest.expected_columns {
        let identity = format!("{}.{}", target.class_name, target.attribute_name);
        let attr = match find_class(model, &target.class_name) {
            Lookup::Found(class) => {
                let found = class.attributes.iter().rev().find(|a| a.name == target.attribute_name);
                if found.is_none() {
                    discrepancies.push(Discrepancy {
                        category: Category::Column,
                        identity: identity.clone(),
                        reason: "attribute not found".into(),
                    });
                }
                found
            }
            other => {
                discrepancies.push(Discrepancy {
                    category: Category::Column,
                    identity: identity.clone(),
                    reason: format!("class {}", other.reason().unwrap_or_default()),
                });
                None
            }
        };
        let uses_call = attr
            .and_then(|a| a.value_call.as_deref())
            .is_some_and(|c| callee_tail(c) == "mapped_column");
        let annotated = attr
            .and_then(|a| a.annotation.as_deref())
            .is_some_and(is_mapped_annotation);
        statuses.push(ColumnStatus {
            class_name: target.class_name.clone(),
            attribute_name: target.attribute_name.clone(),
            resolved: attr.is_some(),
            uses_mapped_column_call: uses_call,
            has_mapped_annotation: annotated,
            migrated: uses_call && annotated,
        });
    }
    (statuses, discrepancies)
}

pub fn analyze_methods(model: &SourceModel, manifest: &TargetsManifest) -> (Vec<MethodStatus>, Vec<Discrepancy>) {
    let mut statuses = Vec::new();
    let mut discrepancies = Vec::new();
    for target in &manifest.expected_methods {
        let found = find_function(model, &target.qualified_name);
        let (resolved, fully_typed, async_ok) = match &found {
            Lookup::Found(f) => (true, f.fully_typed(), f.is_async == target.must_be_async),
            other => {
                discrepancies.push(Discrepancy {
                    category: Category::Method,
                    identity: target.qualified_name.clone(),
                    reason: other.reason().unwrap_or_default(),
                });
                (false, false, false)
            }
        };
        statuses.push(MethodStatus {
            qualified_name: target.qualified_name.clone(),
            resolved,
            fully_typed,
            async_ok,
            migrated: resolved && fully_typed && async_ok,
        });
    }
    (statuses, discrepancies)
}

/// A test counts as migrated when it is `async def` and awaits something
/// (an `await`, `async with` or `async for` in its own body).
pub fn analyze_tests(model: &SourceModel, manifest: &TargetsManifest) -> (Vec<TestStatus>, Vec<Discrepancy>) {
    let mut statuses = Vec::new();
    let mut discrepancies = Vec::new();
    for target in &manifest.expected_tests {
        let found = find_function(model, &target.name);
        let (resolved, is_async, awaits_present) = match &found {
            Lookup::Found(f) => (true, f.is_async, f.awaits + f.async_blocks > 0),
            other => {
                discrepancies.push(Discrepancy {
                    category: Category::Test,
                    identity: target.name.clone(),
                    reason: other.reason().unwrap_or_default(),
                });
                (false, false, false)
            }
        };
        statuses.push(TestStatus {
            name: target.name.clone(),
            resolved,
            is_async,
            awaits_present,
            migrated: resolved && is_async && awaits_present,
        });
    }
    (statuses, discrepancies)
}

/// Version-1 idioms left in the code, one finding per kind and line.
pub fn find_legacy_patterns(model: &SourceModel) -> Vec<LegacyFinding> {
    let mut out = Vec::new();
    for file in &model.files {
        let mut push = |line: usize, kind: LegacyKind| {
            out.push(LegacyFinding {
                path: file.path.clone(),
                line,
                kind,
            })
        };
        for call in &file.calls {
            let kind = match call.tail() {
                "query" => LegacyKind::QueryCall,
                "Column" => LegacyKind::SchemaColumn,
                "create_engine" => LegacyKind::SyncEngine,
                _ => continue,
            };
            push(call.line, kind);
        }
        for &line in &file.sessionmaker_lines {
            push(line, LegacyKind::SessionmakerUse);
        }
        for import in &file.imports {
            let Some(module) = import.from_module.as_deref() else { continue };
            if module.starts_with('.') || module == ASYNC_EXTENSION_MODULE {
                continue;
            }
            if import.names.iter().any(|n| n == "create_async_engine") {
                push(import.line, LegacyKind::WrongImport);
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

fn ratio(flags: impl Iterator<Item = bool>) -> Ratio {
    let mut r = Ratio::default();
    for migrated in flags {
        r.total += 1;
        r.migrated += usize::from(migrated);
    }
    r
}

pub fn analyze(model: &SourceModel, manifest: &TargetsManifest) -> AnalysisReport {
    let (columns, mut discrepancies) = analyze_columns(model, manifest);
    let (methods, d) = analyze_methods(model, manifest);
    discrepancies.extend(d);
    let (tests, d) = analyze_tests(model, manifest);
    discrepancies.extend(d);
    AnalysisReport {
        summary: Summary {
            columns: ratio(columns.iter().map(|c| c.migrated)),
            methods: ratio(methods.iter().map(|m| m.migrated)),
            tests: ratio(tests.iter().map(|t| t.migrated)),
        },
        columns,
        methods,
        tests,
        findings: find_legacy_patterns(model),
        discrepancies,
        parse_errors: model.parse_errors.clone(),
    }
}

/// Reads every `.py` file under `root`, skipping tool and cache directories.
pub fn read_sources(root: &Path) -> Result<BTreeMap<String, String>, AnalyzerError> {
    let mut files = BTreeMap::new();
    for rel in workspace::list_files(root)? {
        if !Path::new(&rel).extension().is_some_and(|e| e == SUBJECT_EXTENSION) {
            continue;
        }
        let path = root.join(&rel);
        let bytes = std::fs::read(&path).map_err(workspace::io_err(&path))?;
        files.insert(rel, String::from_utf8_lossy(&bytes).into_owned());
    }
    Ok(files)
}

pub fn analyze_tree(root: &Path, manifest: &TargetsManifest) -> Result<AnalysisReport, AnalyzerError> {
    let model = parse_sources(&read_sources(root)?);
    Ok(analyze(&model, manifest))
}
