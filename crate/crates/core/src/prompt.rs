//! Prompt rendering for the three prompting strategies.
//!
//! Every strategy shares the same base command. One-shot adds a worked
//! example, chain-of-thought adds a numbered step guide followed by the same
//! example. The code to migrate is always the last block of the user message,
//! wrapped in the start/end markers the model is asked to echo back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_START_MARKER: &str = "### START CODE ###";
pub const DEFAULT_END_MARKER: &str = "### END CODE ###";

pub const DEFAULT_SYSTEM_ROLE: &str = "You are a developer with expertise in Python";

pub const DEFAULT_BASE_COMMAND: &str = "The Python code bellow uses the library sqlalchemy with version 1. \
Migrate it so that it works with version 2 of sqlalchemy. \
Make the code compatible with python's asyncio. \
Use python's typing module to add type hints to the code. \
Your answer must only contain code. \
Do not explain it. \
Do not add markdown backticks for code. \
Do not add extra functionality to the code. \
Do not remove code that is not being changed. \
If there's no need to change the code, answer only with the code itself. \
The first line of code must have a comment \"### START CODE ###\". \
The last line of code must have a comment \"### END CODE ###\".";

pub const SUBJECT_PREAMBLE: &str = "Here is the code to migrate:";

pub const EXAMPLE_PREAMBLE: &str =
    "Use the following code block as an example of migrated code, follow the same patterns used in it:";

pub const GUIDE_PREAMBLE: &str = "Use the steps bellow as a guide for the migration. \
You don't need to follow them exactly as described, but they should be able to help with the migration:";

pub const DEFAULT_STEP_GUIDE: [&str; 9] = [
    "Update the used database engine, if any, so that you're using `create_async_engine` instead of `create_engine`.",
    "If any tables and their columns are declared, update their declarations so that they use `mapped_columns` instead of `schema.Column` and ensure they are correctly typed with the Mapped annotation, making sure to import the correct types from the library.",
    "Ensure that all queries, if any, are updated to use the new 2.0 style of querying, such as using `select()` instead of `query()`.",
    "Update functions that use `sessionmaker` to use `session` instead.",
    "Update the code to use async functions and await calls where necessary.",
    "Implement type hinting for all functions and variables and update old type hinting to ensure they are correct.",
    "Ensure there are no missing import statements.",
    "Remove any unused imports or variable declarations.",
    "Make sure the code works.",
];

/// Migrated SQLAlchemy 2 code used as the one-shot example when no other
/// example file is configured.
pub const DEFAULT_EXAMPLE_CODE: &str = include_str!("../assets/one_shot_example.py");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("strategy {0} requires example code but the template has none")]
    MissingExample(Strategy),
    #[error("chain-of-thought requires a step guide but the template has none")]
    MissingGuide,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ZeroShot,
    OneShot,
    ChainOfThought,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ZeroShot, Strategy::OneShot, Strategy::ChainOfThought];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero-shot",
            Strategy::OneShot => "one-shot",
            Strategy::ChainOfThought => "chain-of-thought",
        }
    }

    /// Row label used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "Zero-Shot",
            Strategy::OneShot => "One-Shot",
            Strategy::ChainOfThought => "Chain Of Thoughts",
        }
    }

    pub fn needs_example(self) -> bool {
        !matches!(self, Strategy::ZeroShot)
    }

    pub fn needs_guide(self) -> bool {
        matches!(self, Strategy::ChainOfThought)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "zero-shot" | "zeroshot" => Ok(Strategy::ZeroShot),
            "one-shot" | "oneshot" => Ok(Strategy::OneShot),
            "chain-of-thought" | "chain-of-thoughts" | "cot" => Ok(Strategy::ChainOfThought),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// The configurable parts a prompt is assembled from.
///
/// Construction validates that the base command names both markers exactly
/// once and that a step guide, when present, has no blank steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    system_role: String,
    base_command: String,
    example_code: Option<String>,
    step_guide: Option<Vec<String>>,
    start_marker: String,
    end_marker: String,
}

impl PromptTemplate {
    pub fn new(
        base_command: impl Into<String>,
        start_marker: impl Into<String>,
        end_marker: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let template = PromptTemplate {
            system_role: DEFAULT_SYSTEM_ROLE.to_string(),
            base_command: base_command.into(),
            example_code: None,
            step_guide: None,
            start_marker: start_marker.into(),
            end_marker: end_marker.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn with_system_role(mut self, role: impl Into<String>) -> Result<Self, PromptError> {
        self.system_role = role.into();
        self.validate()?;
        Ok(self)
    }

    pub fn with_example_code(mut self, code: impl Into<String>) -> Result<Self, PromptError> {
        self.example_code = Some(code.into());
        self.validate()?;
        Ok(self)
    }

    pub fn with_step_guide<I, S>(mut self, steps: I) -> Result<Self, PromptError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.step_guide = Some(steps.into_iter().map(Into::into).collect());
        self.validate()?;
        Ok(self)
    }

    pub fn without_example_code(mut self) -> Self {
        self.example_code = None;
        self
    }

    pub fn without_step_guide(mut self) -> Self {
        self.step_guide = None;
        self
    }

    fn validate(&self) -> Result<(), PromptError> {
        let invalid = |msg: String| Err(PromptError::InvalidTemplate(msg));
        if self.start_marker.trim().is_empty() || self.end_marker.trim().is_empty() {
            return invalid("markers must not be blank".into());
        }
        if self.start_marker == self.end_marker
            || self.start_marker.contains(&self.end_marker)
            || self.end_marker.contains(&self.start_marker)
        {
            return invalid("start and end markers must be distinct".into());
        }
        for (name, marker) in [("start", &self.start_marker), ("end", &self.end_marker)] {
            let n = self.base_command.matches(marker.as_str()).count();
            if n != 1 {
                return invalid(format!(
                    "base command must mention the {name} marker exactly once (found {n})"
                ));
            }
        }
        if self.system_role.trim().is_empty() {
            return invalid("system role must not be blank".into());
        }
        if let Some(steps) = &self.step_guide {
            if steps.is_empty() {
                return invalid("step guide must not be empty".into());
            }
            if let Some(i) = steps.iter().position(|s| s.trim().is_empty()) {
                return invalid(format!("step {} of the guide is blank", i + 1));
            }
        }
        Ok(())
    }

    pub fn system_role(&self) -> &str {
        &self.system_role
    }

    pub fn base_command(&self) -> &str {
        &self.base_command
    }

    pub fn example_code(&self) -> Option<&str> {
        self.example_code.as_deref()
    }

    pub fn step_guide(&self) -> Option<&[String]> {
        self.step_guide.as_deref()
    }

    pub fn start_marker(&self) -> &str {
        &self.start_marker
    }

    pub fn end_marker(&self) -> &str {
        &self.end_marker
    }

    /// Wraps `code` between marker lines, dropping trailing newlines so the
    /// end marker always sits on its own line.
    pub fn wrap(&self, code: &str) -> String {
        let body = code.trim_end_matches(['\n', '\r']);
        format!("{}\n{}\n{}", self.start_marker, body, self.end_marker)
    }
}

/// Base command, markers and the nine-step guide. No example code is set;
/// see [`PromptTemplate::with_example_code`] and [`DEFAULT_EXAMPLE_CODE`].
pub fn default_template() -> PromptTemplate {
    PromptTemplate {
        system_role: DEFAULT_SYSTEM_ROLE.to_string(),
        base_command: DEFAULT_BASE_COMMAND.to_string(),
        example_code: None,
        step_guide: Some(DEFAULT_STEP_GUIDE.iter().map(|s| s.to_string()).collect()),
        start_marker: DEFAULT_START_MARKER.to_string(),
        end_marker: DEFAULT_END_MARKER.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_message: String,
    pub user_message: String,
    subject_offset: usize,
}

impl RenderedPrompt {
    /// The marked block holding the code under migration.
    pub fn subject_block(&self) -> &str {
        &self.user_message[self.subject_offset..]
    }
}

pub fn render(
    strategy: Strategy,
    template: &PromptTemplate,
    subject_code: &str,
) -> Result<RenderedPrompt, PromptError> {
    let example = match (strategy.needs_example(), template.example_code()) {
        (true, None) => return Err(PromptError::MissingExample(strategy)),
        (true, Some(code)) => Some(code),
        (false, _) => None,
    };
    let guide = match (strategy.needs_guide(), template.step_guide()) {
        (true, None) => return Err(PromptError::MissingGuide),
        (true, Some(steps)) => Some(steps),
        (false, _) => None,
    };

    let mut sections: Vec<String> = vec![template.base_command().to_string()];
    match strategy {
        Strategy::ZeroShot => {}
        Strategy::OneShot => {
            sections.push(EXAMPLE_PREAMBLE.to_string());
            sections.push(template.wrap(example.unwrap_or_default()));
        }
        Strategy::ChainOfThought => {
            let numbered: Vec<String> = guide
                .unwrap_or_default()
                .iter()
                .enumerate()
                .map(|(i, step)| format!("{}. {}", i + 1, step.trim()))
                .collect();
            sections.push(GUIDE_PREAMBLE.to_string());
            sections.push(numbered.join("\n"));
            sections.push(template.wrap(example.unwrap_or_default()));
        }
    }
    sections.push(SUBJECT_PREAMBLE.to_string());

    let mut user_message = sections.join("\n\n");
    user_message.push_str("\n\n");
    let subject_offset = user_message.len();
    user_message.push_str(&template.wrap(subject_code));

    Ok(RenderedPrompt {
        system_message: template.system_role().to_string(),
        user_message,
        subject_offset,
    })
}
