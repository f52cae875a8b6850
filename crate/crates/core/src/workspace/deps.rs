//! Line-level edits to Poetry `pyproject.toml` and pip `requirements.txt`.
//!
//! Only the lines that declare the edited package change; formatting,
//! comments and ordering elsewhere in the manifest are preserved.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::WorkspaceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DependencyAction {
    Add,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyEdit {
    pub action: DependencyAction,
    pub package: String,
    #[serde(default)]
    pub version_spec: String,
}

impl DependencyEdit {
    pub fn add(package: impl Into<String>, version_spec: impl Into<String>) -> Self {
        DependencyEdit {
            action: DependencyAction::Add,
            package: package.into(),
            version_spec: version_spec.into(),
        }
    }

    pub fn bump(package: impl Into<String>, version_spec: impl Into<String>) -> Self {
        DependencyEdit {
            action: DependencyAction::Bump,
            package: package.into(),
            version_spec: version_spec.into(),
        }
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if !PACKAGE_NAME.is_match(&self.package) {
            return Err(WorkspaceError::BadEdit(format!("invalid package name `{}`", self.package)));
        }
        if self.action == DependencyAction::Bump && self.version_spec.trim().is_empty() {
            return Err(WorkspaceError::BadEdit(format!("bump of `{}` needs a version spec", self.package)));
        }
        if self.version_spec.contains(['\n', '"']) {
            return Err(WorkspaceError::BadEdit(format!("unsupported version spec `{}`", self.version_spec)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestKind {
    Poetry,
    Requirements,
}

static PACKAGE_NAME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9][A-Za-z0-9._-]*$").unwrap());
static POETRY_ENTRY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^(\s*)(["']?)([A-Za-z0-9][A-Za-z0-9._-]*)(["']?)(\s*=\s*)(.*)$"#).unwrap());
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^("[^"]*"|'[^']*')"#).unwrap());
static INLINE_VERSION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(\bversion\s*=\s*)("[^"]*"|'[^']*')"#).unwrap());
static REQUIREMENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*([A-Za-z0-9][A-Za-z0-9._-]*)(\s*\[[^\]]*\])?([^;#]*)(.*)$").unwrap());

fn normalize(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_sep = false;
    for c in name.chars() {
        if matches!(c, '-' | '_' | '.') {
            if !last_sep {
                out.push('-');
            }
            last_sep = true;
        } else {
            out.push(c.to_ascii_lowercase());
            last_sep = false;
        }
    }
    out
}

fn is_poetry_dependency_table(header: &str) -> bool {
    let name = header.trim().trim_start_matches('[').trim_end_matches(']').trim();
    name == "tool.poetry.dependencies"
        || name == "tool.poetry.dev-dependencies"
        || (name.starts_with("tool.poetry.group.") && name.ends_with(".dependencies"))
}

impl ManifestKind {
    pub fn file_name(self) -> &'static str {
        match self {
            ManifestKind::Poetry => "pyproject.toml",
            ManifestKind::Requirements => "requirements.txt",
        }
    }

    /// Prefers a Poetry `pyproject.toml`, then `requirements.txt`.
    pub fn detect(root: &Path) -> Result<(ManifestKind, &'static str), WorkspaceError> {
        let pyproject = root.join("pyproject.toml");
        if let Ok(text) = std::fs::read_to_string(&pyproject) {
            if text.lines().any(|l| l.trim() == "[tool.poetry.dependencies]") {
                return Ok((ManifestKind::Poetry, "pyproject.toml"));
            }
        }
        if root.join("requirements.txt").is_file() {
            return Ok((ManifestKind::Requirements, "requirements.txt"));
        }
        Err(WorkspaceError::ManifestNotFound)
    }

    pub fn apply(self, text: &str, edit: &DependencyEdit) -> Result<String, WorkspaceError> {
        edit.validate()?;
        match self {
            ManifestKind::Poetry => poetry_apply(text, edit),
            ManifestKind::Requirements => requirements_apply(text, edit),
        }
    }
}

/// Splits into lines that keep their terminators so the file can be
/// reassembled byte-for-byte.
fn split_lines(text: &str) -> Vec<String> {
    text.split_inclusive('\n').map(str::to_string).collect()
}

fn line_ending(text: &str) -> &'static str {
    if text.contains("\r\n") {
        "\r\n"
    } else {
        "\n"
    }
}

fn body_and_eol(line: &str) -> (&str, &str) {
    if let Some(b) = line.strip_suffix("\r\n") {
        (b, "\r\n")
    } else if let Some(b) = line.strip_suffix('\n') {
        (b, "\n")
    } else {
        (line, "")
    }
}

fn poetry_apply(text: &str, edit: &DependencyEdit) -> Result<String, WorkspaceError> {
    let mut lines = split_lines(text);
    let eol = line_ending(text);
    let wanted = normalize(&edit.package);

    let mut section: Option<bool> = None; // Some(true) inside a dependency table
    let mut main_section_end: Option<usize> = None;
    let mut in_main = false;
    let mut found: Option<usize> = None;
    for (i, line) in lines.iter().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            in_main = trimmed == "[tool.poetry.dependencies]";
            section = Some(is_poetry_dependency_table(trimmed));
            if in_main {
                main_section_end = Some(i + 1);
            }
            continue;
        }
        if section != Some(true) || trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if in_main {
            main_section_end = Some(i + 1);
        }
        if let Some(caps) = POETRY_ENTRY.captures(body_and_eol(line).0) {
            if found.is_none() && normalize(&caps[3]) == wanted {
                found = Some(i);
            }
        }
    }

    match edit.action {
        DependencyAction::Add => {
            if found.is_some() {
                return Ok(text.to_string());
            }
            let at = main_section_end.ok_or(WorkspaceError::ManifestNotFound)?;
            let spec = if edit.version_spec.trim().is_empty() { "*" } else { edit.version_spec.trim() };
            if at > 0 && !lines[at - 1].ends_with('\n') {
                lines[at - 1].push_str(eol);
            }
            lines.insert(at, format!("{} = \"{}\"{}", edit.package, spec, eol));
        }
        DependencyAction::Bump => {
            let i = found.ok_or_else(|| WorkspaceError::PackageNotFound(edit.package.clone()))?;
            let (body, line_eol) = body_and_eol(&lines[i]);
            let caps = POETRY_ENTRY.captures(body).expect("matched while scanning");
            let value = &caps[6];
            let spec = format!("\"{}\"", edit.version_spec.trim());
            let new_value = if QUOTED.is_match(value) {
                QUOTED.replace(value, regex::NoExpand(&spec)).into_owned()
            } else if value.trim_start().starts_with('{') && INLINE_VERSION.is_match(value) {
                INLINE_VERSION
                    .replace(value, |c: &regex::Captures| format!("{}{}", &c[1], spec))
                    .into_owned()
            } else {
                return Err(WorkspaceError::ManifestFormat {
                    package: edit.package.clone(),
                    reason: format!("unsupported constraint `{}`", value.trim()),
                });
            };
            let rebuilt = format!("{}{}{}{}{}{}{}", &caps[1], &caps[2], &caps[3], &caps[4], &caps[5], new_value, line_eol);
            lines[i] = rebuilt;
        }
    }
    Ok(lines.concat())
}

/// Turns a Poetry caret constraint into a pip range; other specs without a
/// comparison operator are pinned with `==`.
fn pip_spec(spec: &str) -> String {
    let spec = spec.trim();
    if spec.is_empty() || spec == "*" {
        return String::new();
    }
    if spec.starts_with(['=', '<', '>', '!', '~']) {
        return spec.to_string();
    }
    if let Some(caret) = spec.strip_prefix('^') {
        let parts: Vec<u64> = caret.split('.').filter_map(|p| p.parse().ok()).collect();
        if !parts.is_empty() && parts.len() == caret.split('.').count() {
            let pivot = parts.iter().position(|&p| p != 0).unwrap_or(parts.len() - 1);
            let mut upper: Vec<u64> = parts[..=pivot].to_vec();
            upper[pivot] += 1;
            let upper: Vec<String> = upper.iter().map(u64::to_string).collect();
            return format!(">={caret},<{}", upper.join("."));
        }
    }
    format!("=={spec}")
}

fn requirements_apply(text: &str, edit: &DependencyEdit) -> Result<String, WorkspaceError> {
    let mut lines = split_lines(text);
    let eol = line_ending(text);
    let wanted = normalize(&edit.package);
    let found = lines.iter().position(|line| {
        let body = body_and_eol(line).0;
        let t = body.trim_start();
        if t.is_empty() || t.starts_with('#') || t.starts_with('-') {
            return false;
        }
        REQUIREMENT.captures(body).is_some_and(|c| normalize(&c[1]) == wanted)
    });

    match edit.action {
        DependencyAction::Add => {
            if found.is_some() {
                return Ok(text.to_string());
            }
            if let Some(last) = lines.last_mut() {
                if !last.ends_with('\n') {
                    last.push_str(eol);
                }
            }
            lines.push(format!("{}{}{}", edit.package, pip_spec(&edit.version_spec), eol));
        }
        DependencyAction::Bump => {
            let i = found.ok_or_else(|| WorkspaceError::PackageNotFound(edit.package.clone()))?;
            let (body, line_eol) = body_and_eol(&lines[i]);
            let caps = REQUIREMENT.captures(body).expect("matched while scanning");
            let extras = caps.get(2).map_or("", |m| m.as_str().trim_start());
            let old_spec = &caps[3];
            let trailing_ws = &old_spec[old_spec.trim_end().len()..];
            let rest = &caps[4];
            let separator = if rest.is_empty() { "" } else { trailing_ws };
            lines[i] = format!(
                "{}{}{}{}{}{}",
                &caps[1],
                extras,
                pip_spec(&edit.version_spec),
                if separator.is_empty() && !rest.is_empty() { " " } else { separator },
                rest,
                line_eol
            );
        }
    }
    Ok(lines.concat())
}
