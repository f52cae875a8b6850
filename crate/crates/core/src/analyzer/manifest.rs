use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalyzerError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnTarget {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "attribute")]
    pub attribute_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodTarget {
    #[serde(rename = "name")]
    pub qualified_name: String,
    #[serde(rename = "async")]
    pub must_be_async: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTarget {
    pub name: String,
}

/// Ground truth from the manual baseline migration: what has to be
/// migrated, and therefore the denominators of every migration ratio.
///
/// ```toml
/// [[columns]]
/// class = "TodoInDB"
/// attribute = "id"
///
/// [[methods]]
/// name = "app.adapters.todo_repository.SQLTodoRepository.add"
/// async = true
///
/// [[tests]]
/// name = "tests.integration.test_todo_api.test_todo"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetsManifest {
    #[serde(default, rename = "columns")]
    pub expected_columns: Vec<ColumnTarget>,
    #[serde(default, rename = "methods")]
    pub expected_methods: Vec<MethodTarget>,
    #[serde(default, rename = "tests")]
    pub expected_tests: Vec<TestTarget>,
}

impl TargetsManifest {
    pub fn from_toml(text: &str) -> Result<Self, AnalyzerError> {
        let manifest: TargetsManifest =
            toml::from_str(text).map_err(|e| AnalyzerError::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, AnalyzerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AnalyzerError::Manifest(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let mut seen = HashSet::new();
        for c in &self.expected_columns {
            if c.class_name.trim().is_empty() || c.attribute_name.trim().is_empty() {
                return Err(AnalyzerError::Manifest("column entries need a class and an attribute".into()));
            }
            if !seen.insert(format!("{}.{}", c.class_name, c.attribute_name)) {
                return Err(AnalyzerError::Manifest(format!(
                    "duplicate column {}.{}",
                    c.class_name, c.attribute_name
                )));
            }
        }
        let mut seen = HashSet::new();
        for m in &self.expected_methods {
            if m.qualified_name.trim().is_empty() || !seen.insert(m.qualified_name.as_str()) {
                return Err(AnalyzerError::Manifest(format!("empty or duplicate method `{}`", m.qualified_name)));
            }
        }
        let mut seen = HashSet::new();
        for t in &self.expected_tests {
            if t.name.trim().is_empty() || !seen.insert(t.name.as_str()) {
                return Err(AnalyzerError::Manifest(format!("empty or duplicate test `{}`", t.name)));
            }
        }
        Ok(())
    }
}
