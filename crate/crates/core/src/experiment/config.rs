use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::gateway::Mode;
use crate::prompt::{default_template, PromptTemplate, Strategy, DEFAULT_EXAMPLE_CODE};
use crate::toolchain::ToolchainConfig;
use crate::workspace::{DependencyEdit, Phase, TestGlobs, DEFAULT_TEST_GLOBS};

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_phases() -> Vec<Phase> {
    Phase::ALL.to_vec()
}

/// Overrides for the prompt template. Unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOverrides {
    pub system_role: Option<String>,
    pub base_command: Option<String>,
    pub start_marker: Option<String>,
    pub end_marker: Option<String>,
    pub example_code_path: Option<PathBuf>,
    pub step_guide: Option<Vec<String>>,
}

/// A manual fix copied over one cell's final tree before re-checking it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostFix {
    pub strategy: Strategy,
    pub phase: Phase,
    /// Directory whose files replace the same paths in the cell's tree.
    pub overlay: PathBuf,
    #[serde(default)]
    pub note: Option<String>,
}

/// The experiment as written in the config file. Relative paths are taken
/// from the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub project_root: PathBuf,
    /// Hand-migrated tree. Supplies the tests for the application phase and
    /// the application for the tests phase.
    #[serde(default)]
    pub manual_baseline: Option<PathBuf>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_phases")]
    pub phases: Vec<Phase>,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub replay_store: Option<PathBuf>,
    pub targets_manifest: PathBuf,
    #[serde(default)]
    pub test_globs: Option<Vec<String>>,
    #[serde(default)]
    pub dependency_edits: Vec<DependencyEdit>,
    #[serde(default)]
    pub template: TemplateOverrides,
    #[serde(default)]
    pub tools: ToolchainConfig,
    /// Commands whose first output line is recorded as a tool version.
    #[serde(default)]
    pub tool_versions: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub post_fix: Option<PostFix>,
    /// Cells run concurrently, each in its own workspace.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        Self::from_toml(&text, &base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.base_dir = base_dir
            .canonicalize()
            .map_err(|e| ExperimentError::Config(format!("config directory {}: {e}", base_dir.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.strategies.is_empty() {
            return fail("strategies must not be empty");
        }
        if self.phases.is_empty() {
            return fail("phases must not be empty");
        }
        if has_duplicates(&self.strategies) || has_duplicates(&self.phases) {
            return fail("strategies and phases must not repeat");
        }
        if self.model_id.trim().is_empty() {
            return fail("model_id must not be empty");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail("temperature must be within [0, 2]");
        }
        if self.phases.contains(&Phase::Tests) && self.manual_baseline.is_none() {
            return fail("the tests phase needs manual_baseline");
        }
        if self.jobs == Some(0) {
            return fail("jobs must be at least 1");
        }
        for edit in &self.dependency_edits {
            edit.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if let Some(fix) = &self.post_fix {
            if !self.strategies.contains(&fix.strategy) || !self.phases.contains(&fix.phase) {
                return fail("post_fix must name a configured strategy and phase");
            }
        }
        self.test_globs()?;
        Ok(())
    }

    /// Checks that `mode` can run with this config.
    pub fn check_mode(&self, mode: Mode) -> Result<(), ExperimentError> {
        if matches!(mode, Mode::Replay | Mode::Record) && self.replay_store.is_none() {
            return Err(ExperimentError::Config(format!("{mode} mode requires replay_store")));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn test_globs(&self) -> Result<TestGlobs, ExperimentError> {
        let globs = match &self.test_globs {
            Some(patterns) => TestGlobs::new(patterns),
            None => TestGlobs::new(DEFAULT_TEST_GLOBS),
        };
        globs.map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn template(&self) -> Result<PromptTemplate, ExperimentError> {
        let o = &self.template;
        let base = default_template();
        let mut template = if o.base_command.is_some() || o.start_marker.is_some() || o.end_marker.is_some() {
            PromptTemplate::new(
                o.base_command.as_deref().unwrap_or(base.base_command()),
                o.start_marker.as_deref().unwrap_or(base.start_marker()),
                o.end_marker.as_deref().unwrap_or(base.end_marker()),
            )?
            .with_step_guide(base.step_guide().unwrap_or_default().iter().cloned())?
        } else {
            base
        };
        if let Some(role) = &o.system_role {
            template = template.with_system_role(role)?;
        }
        if let Some(steps) = &o.step_guide {
            template = template.with_step_guide(steps.iter().cloned())?;
        }
        let example = match &o.example_code_path {
            Some(p) => {
                let path = self.resolve(p);
                std::fs::read_to_string(&path)
                    .map_err(|e| ExperimentError::Config(format!("example code {}: {e}", path.display())))?
            }
            None => DEFAULT_EXAMPLE_CODE.to_string(),
        };
        Ok(template.with_example_code(example)?)
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}
