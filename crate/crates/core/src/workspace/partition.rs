use std::fmt;
use std::str::FromStr;

use globset::{GlobBuilder, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};

use super::WorkspaceError;

pub const DEFAULT_TEST_GLOBS: [&str; 4] = ["tests/**", "**/test_*.py", "**/*_test.py", "**/conftest.py"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Application,
    Tests,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Application, Phase::Tests];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Application => "application",
            Phase::Tests => "tests",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "application" | "app" => Ok(Phase::Application),
            "tests" | "test" => Ok(Phase::Tests),
            other => Err(format!("unknown phase `{other}` (expected application or tests)")),
        }
    }
}

/// Glob patterns that identify test files, matched against `/`-separated
/// paths relative to the project root. `*` does not cross directories.
#[derive(Debug, Clone)]
pub struct TestGlobs {
    patterns: Vec<String>,
    set: GlobSet,
}

impl TestGlobs {
    pub fn new<I, S>(patterns: I) -> Result<Self, WorkspaceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let patterns: Vec<String> = patterns.into_iter().map(Into::into).collect();
        if patterns.is_empty() {
            return Err(WorkspaceError::BadGlob {
                glob: String::new(),
                reason: "at least one test glob is required".into(),
            });
        }
        let mut builder = GlobSetBuilder::new();
        for p in &patterns {
            let glob = GlobBuilder::new(p)
                .literal_separator(true)
                .build()
                .map_err(|e| WorkspaceError::BadGlob {
                    glob: p.clone(),
                    reason: e.kind().to_string(),
                })?;
            builder.add(glob);
        }
        let set = builder.build().map_err(|e| WorkspaceError::BadGlob {
            glob: patterns.join(", "),
            reason: e.to_string(),
        })?;
        Ok(TestGlobs { patterns, set })
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn is_match(&self, rel: &str) -> bool {
        self.set.is_match(rel)
    }
}

impl Default for TestGlobs {
    fn default() -> Self {
        TestGlobs::new(DEFAULT_TEST_GLOBS).expect("default globs are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhasePartition {
    pub phase: Phase,
    pub included: Vec<String>,
    pub excluded: Vec<String>,
}

impl PhasePartition {
    pub fn classify(phase: Phase, globs: &TestGlobs, subject_files: impl IntoIterator<Item = String>) -> Self {
        let (tests, app): (Vec<String>, Vec<String>) =
            subject_files.into_iter().partition(|p| globs.is_match(p));
        let (mut included, mut excluded) = match phase {
            Phase::Application => (app, tests),
            Phase::Tests => (tests, app),
        };
        included.sort();
        excluded.sort();
        PhasePartition { phase, included, excluded }
    }
}
