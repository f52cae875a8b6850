//! Isolated copies of a client project and the edits applied to them.
//!
//! The origin project is only ever read. All edits land in the staged copy,
//! and every read or write made through [`Workspace`] is logged so callers
//! can check which files a phase touched.

mod deps;
mod partition;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

pub use deps::{DependencyAction, DependencyEdit, ManifestKind};
pub use partition::{Phase, PhasePartition, TestGlobs, DEFAULT_TEST_GLOBS};

/// Directories never copied into a workspace and never hashed.
const IGNORED_DIRS: [&str; 8] = [
    ".git",
    "__pycache__",
    ".venv",
    "venv",
    ".mypy_cache",
    ".pytest_cache",
    ".ruff_cache",
    "node_modules",
];

pub const SUBJECT_EXTENSION: &str = "py";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("I/O error at {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("{0} contains no subject source files")]
    EmptyProject(PathBuf),
    #[error("path `{0}` escapes the workspace root")]
    PathEscape(String),
    #[error("staging destination {0} must be empty and outside the origin")]
    BadDestination(PathBuf),
    #[error("no recognized dependency manifest in the workspace")]
    ManifestNotFound,
    #[error("package `{0}` is not declared in the dependency manifest")]
    PackageNotFound(String),
    #[error("cannot edit `{package}` in the dependency manifest: {reason}")]
    ManifestFormat { package: String, reason: String },
    #[error("invalid test glob `{glob}`: {reason}")]
    BadGlob { glob: String, reason: String },
    #[error("invalid dependency edit: {0}")]
    BadEdit(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub kind: AccessKind,
    pub path: String,
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    origin: PathBuf,
    origin_digest: String,
    applied_files: BTreeSet<String>,
    access_log: Vec<Access>,
}

impl Workspace {
    /// Copies `project_root` into `dest`, which must be empty or absent.
    pub fn stage(project_root: &Path, dest: &Path) -> Result<Workspace, WorkspaceError> {
        Self::stage_composite(project_root, None, dest)
    }

    /// Stages `base_root`, then replaces every file matched by `globs` with
    /// the matching files of `tests_root`.
    ///
    /// This is how a phase is evaluated against a counterpart tree: the
    /// application files come from one project and the test files from
    /// another.
    pub fn stage_composite(
        base_root: &Path,
        tests_from: Option<(&Path, &TestGlobs)>,
        dest: &Path,
    ) -> Result<Workspace, WorkspaceError> {
        let origin = base_root.canonicalize().map_err(io_err(base_root))?;
        prepare_destination(&origin, dest)?;
        if let Some((tests_root, _)) = tests_from {
            let tests_root = tests_root.canonicalize().map_err(io_err(tests_root))?;
            if dest_inside(&tests_root, dest) {
                return Err(WorkspaceError::BadDestination(dest.to_path_buf()));
            }
        }

        let base_files = list_files(&origin)?;
        if !base_files.iter().any(|p| is_subject(p)) && tests_from.is_none() {
            return Err(WorkspaceError::EmptyProject(origin));
        }
        let root = dest.canonicalize().map_err(io_err(dest))?;
        for rel in &base_files {
            if let Some((_, globs)) = tests_from {
                if globs.is_match(rel) {
                    continue;
                }
            }
            copy_file(&origin.join(rel), &root.join(rel))?;
        }
        if let Some((tests_root, globs)) = tests_from {
            for rel in list_files(tests_root)? {
                if globs.is_match(&rel) {
                    copy_file(&tests_root.join(&rel), &root.join(&rel))?;
                }
            }
        }

        let ws = Workspace {
            origin_digest: tree_digest(&root)?,
            root,
            origin,
            applied_files: BTreeSet::new(),
            access_log: Vec::new(),
        };
        if ws.subject_files()?.is_empty() {
            return Err(WorkspaceError::EmptyProject(ws.origin.clone()));
        }
        Ok(ws)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn origin(&self) -> &Path {
        &self.origin
    }

    /// Digest of the tree as it was right after staging.
    pub fn origin_digest(&self) -> &str {
        &self.origin_digest
    }

    pub fn applied_files(&self) -> &BTreeSet<String> {
        &self.applied_files
    }

    pub fn access_log(&self) -> &[Access] {
        &self.access_log
    }

    /// Digest of the tree as it is now.
    pub fn tree_digest(&self) -> Result<String, WorkspaceError> {
        tree_digest(&self.root)
    }

    /// Relative paths of all `.py` files, sorted.
    pub fn subject_files(&self) -> Result<Vec<String>, WorkspaceError> {
        Ok(list_files(&self.root)?.into_iter().filter(|p| is_subject(p)).collect())
    }

    pub fn partition(&self, phase: Phase, globs: &TestGlobs) -> Result<PhasePartition, WorkspaceError> {
        Ok(PhasePartition::classify(phase, globs, self.subject_files()?))
    }

    pub fn read_file(&mut self, rel: &str) -> Result<String, WorkspaceError> {
        let path = self.resolve(rel)?;
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        self.access_log.push(Access {
            kind: AccessKind::Read,
            path: rel.to_string(),
        });
        Ok(text)
    }

    /// Replaces `rel` with `code` through a temporary file and a rename, so
    /// readers see either the old or the new content.
    pub fn apply_file(&mut self, rel: &str, code: &str) -> Result<(), WorkspaceError> {
        self.apply_file_with(rel, code, |file, bytes| file.write_all(bytes))
    }

    fn apply_file_with(
        &mut self,
        rel: &str,
        code: &str,
        write: impl FnOnce(&mut File, &[u8]) -> io::Result<()>,
    ) -> Result<(), WorkspaceError> {
        let path = self.resolve(rel)?;
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
        write(tmp.as_file_mut(), code.as_bytes()).map_err(io_err(&path))?;
        tmp.as_file().sync_all().map_err(io_err(&path))?;
        if let Ok(meta) = fs::metadata(&path) {
            let _ = fs::set_permissions(tmp.path(), meta.permissions());
        }
        tmp.persist(&path).map_err(|e| WorkspaceError::IoFailure {
            path: path.clone(),
            source: e.error,
        })?;
        self.applied_files.insert(rel.to_string());
        self.access_log.push(Access {
            kind: AccessKind::Write,
            path: rel.to_string(),
        });
        Ok(())
    }

    /// Copies files from `source_root` over the workspace without recording
    /// them as applied migrations.
    pub fn overlay(&mut self, source_root: &Path) -> Result<Vec<String>, WorkspaceError> {
        let files = list_files(source_root)?;
        for rel in &files {
            let target = self.resolve(rel)?;
            copy_file(&source_root.join(rel), &target)?;
        }
        Ok(files)
    }

    pub fn apply_dependency_edits(&mut self, edits: &[DependencyEdit]) -> Result<ManifestKind, WorkspaceError> {
        let (kind, rel) = ManifestKind::detect(&self.root)?;
        let path = self.root.join(rel);
        let before = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut text = before.clone();
        for edit in edits {
            text = kind.apply(&text, edit)?;
        }
        if text != before {
            self.apply_file_with(rel, &text, |f, b| f.write_all(b))?;
            // manifests are not migrated subject files
            self.applied_files.remove(rel);
        }
        Ok(kind)
    }

    fn resolve(&self, rel: &str) -> Result<PathBuf, WorkspaceError> {
        let candidate = Path::new(rel);
        let escapes = rel.is_empty()
            || candidate.is_absolute()
            || candidate
                .components()
                .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
        if escapes {
            return Err(WorkspaceError::PathEscape(rel.to_string()));
        }
        let path = self.root.join(candidate);
        // symlinked parents must still resolve inside the root
        let mut probe = path.parent();
        while let Some(dir) = probe {
            if dir.exists() {
                let real = dir.canonicalize().map_err(io_err(dir))?;
                if !real.starts_with(&self.root) {
                    return Err(WorkspaceError::PathEscape(rel.to_string()));
                }
                break;
            }
            probe = dir.parent();
        }
        if let Ok(meta) = fs::symlink_metadata(&path) {
            if meta.file_type().is_symlink() {
                let real = path.canonicalize().map_err(io_err(&path))?;
                if !real.starts_with(&self.root) {
                    return Err(WorkspaceError::PathEscape(rel.to_string()));
                }
            }
        }
        Ok(path)
    }
}

fn dest_inside(origin: &Path, dest: &Path) -> bool {
    let absolute = if dest.is_absolute() {
        dest.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(dest)).unwrap_or_else(|_| dest.to_path_buf())
    };
    let mut probe = Some(absolute.as_path());
    while let Some(p) = probe {
        if let Ok(real) = p.canonicalize() {
            return real.starts_with(origin);
        }
        probe = p.parent();
    }
    false
}

fn prepare_destination(origin: &Path, dest: &Path) -> Result<(), WorkspaceError> {
    if dest_inside(origin, dest) {
        return Err(WorkspaceError::BadDestination(dest.to_path_buf()));
    }
    if dest.exists() {
        let mut entries = fs::read_dir(dest).map_err(io_err(dest))?;
        if entries.next().is_some() {
            return Err(WorkspaceError::BadDestination(dest.to_path_buf()));
        }
    }
    fs::create_dir_all(dest).map_err(io_err(dest))
}

fn copy_file(from: &Path, to: &Path) -> Result<(), WorkspaceError> {
    if let Some(parent) = to.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::copy(from, to).map_err(io_err(from))?;
    Ok(())
}

fn is_subject(rel: &str) -> bool {
    Path::new(rel).extension().is_some_and(|e| e == SUBJECT_EXTENSION)
}

/// Relative `/`-separated paths of every regular file under `root`, sorted.
pub fn list_files(root: &Path) -> Result<Vec<String>, WorkspaceError> {
    let mut out = Vec::new();
    let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        e.depth() == 0 || !(e.file_type().is_dir() && IGNORED_DIRS.contains(&e.file_name().to_string_lossy().as_ref()))
    });
    for entry in walker {
        let entry = entry.map_err(|e| WorkspaceError::IoFailure {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf()),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walkdir yields children of root");
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        out.push(parts.join("/"));
    }
    out.sort();
    Ok(out)
}

/// SHA-256 over the sorted `(path, bytes)` pairs of a tree. Each pair is
/// framed as `path NUL len(u64 LE) bytes`.
pub fn tree_digest(root: &Path) -> Result<String, WorkspaceError> {
    let mut hasher = Sha256::new();
    for rel in list_files(root)? {
        let path = root.join(&rel);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}
