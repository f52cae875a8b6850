//! Runs the subject project's own smoke, test, lint and type-check commands
//! and turns their output into metrics.

mod parse;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

pub use parse::{
    parse_lint_score, parse_pytest_summary, parse_typecheck_summary, TestCounts, TypecheckCounts,
    UnparseableOutput, PYLINT_RATING_PATTERN, PYRIGHT_SUMMARY_PATTERN, PYTEST_SUMMARY_PATTERN,
};

pub const DEFAULT_SMOKE_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("invalid tool invocation: {0}")]
    InvalidInvocation(String),
    #[error("failed to start `{program}`: {source}")]
    Spawn { program: String, source: std::io::Error },
    #[error("`{program}` timed out after {seconds}s")]
    Timeout { program: String, seconds: u64 },
    #[error(transparent)]
    Unparseable(#[from] UnparseableOutput),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolInvocation {
    pub command: Vec<String>,
    pub working_dir: PathBuf,
    pub timeout: Duration,
    pub env_overrides: BTreeMap<String, String>,
}

impl ToolInvocation {
    pub fn new(command: Vec<String>, working_dir: impl Into<PathBuf>) -> Result<Self, ToolError> {
        if command.first().is_none_or(|p| p.trim().is_empty()) {
            return Err(ToolError::InvalidInvocation("command must not be empty".into()));
        }
        Ok(ToolInvocation {
            command,
            working_dir: working_dir.into(),
            timeout: DEFAULT_TOOL_TIMEOUT,
            env_overrides: BTreeMap::new(),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Result<Self, ToolError> {
        if timeout.is_zero() {
            return Err(ToolError::InvalidInvocation("timeout must be positive".into()));
        }
        self.timeout = timeout;
        Ok(self)
    }

    pub fn with_env(mut self, env: BTreeMap<String, String>) -> Self {
        self.env_overrides = env;
        self
    }

    fn program(&self) -> &str {
        &self.command[0]
    }
}

/// Replaces `{name}` placeholders in each argument.
pub fn expand_placeholders(argv: &[String], vars: &BTreeMap<&str, String>) -> Vec<String> {
    argv.iter()
        .map(|arg| {
            vars.iter()
                .fold(arg.clone(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRun {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

impl ToolRun {
    pub fn succeeded(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    /// Stdout followed by stderr; summary lines may land on either.
    pub fn combined(&self) -> String {
        if self.stderr.is_empty() {
            self.stdout.clone()
        } else {
            format!("{}\n{}", self.stdout, self.stderr)
        }
    }
}

/// Runs the command to completion or until its timeout, capturing output
/// verbatim. A timed-out process group is killed.
pub fn run_tool(inv: &ToolInvocation) -> Result<ToolRun, ToolError> {
    let mut cmd = Command::new(inv.program());
    cmd.args(&inv.command[1..])
        .current_dir(&inv.working_dir)
        .envs(&inv.env_overrides)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(|source| ToolError::Spawn {
        program: inv.program().to_string(),
        source,
    })?;

    let mut stdout = child.stdout.take().expect("stdout piped");
    let mut stderr = child.stderr.take().expect("stderr piped");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let waited = child.wait_timeout(inv.timeout).map_err(|source| ToolError::Spawn {
        program: inv.program().to_string(),
        source,
    })?;
    let (exit_code, timed_out) = match waited {
        Some(status) => (status.code(), false),
        None => {
            kill_group(&mut child);
            let _ = child.wait();
            (None, true)
        }
    };
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(ToolRun {
        exit_code,
        timed_out,
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
    })
}

fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // SAFETY: killpg only sends a signal; the group id is the child's pid
        // because the child was spawned with process_group(0).
        unsafe {
            libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmokeOutcome {
    pub runs_successfully: bool,
    pub timed_out: bool,
    pub run: ToolRun,
}

/// Exit code 0 within the timeout means the project runs. A timeout counts
/// as not running.
pub fn run_smoke(inv: &ToolInvocation) -> Result<SmokeOutcome, ToolError> {
    let run = run_tool(inv)?;
    if run.timed_out {
        log::warn!("smoke command `{}` timed out after {:?}", inv.command.join(" "), inv.timeout);
    }
    Ok(SmokeOutcome {
        runs_successfully: run.succeeded(),
        timed_out: run.timed_out,
        run,
    })
}

fn checked(inv: &ToolInvocation) -> Result<ToolRun, ToolError> {
    let run = run_tool(inv)?;
    if run.timed_out {
        return Err(ToolError::Timeout {
            program: inv.program().to_string(),
            seconds: inv.timeout.as_secs(),
        });
    }
    Ok(run)
}

pub fn run_tests(inv: &ToolInvocation) -> Result<(TestCounts, ToolRun), ToolError> {
    let run = checked(inv)?;
    let counts = parse_pytest_summary(&run.combined())?;
    Ok((counts, run))
}

pub fn run_lint(inv: &ToolInvocation) -> Result<(f64, ToolRun), ToolError> {
    let run = checked(inv)?;
    let score = parse_lint_score(&run.combined())?;
    Ok((score, run))
}

pub fn run_typecheck(inv: &ToolInvocation) -> Result<(TypecheckCounts, ToolRun), ToolError> {
    let run = checked(inv)?;
    let counts = parse_typecheck_summary(&run.combined())?;
    Ok((counts, run))
}

/// A metric that was measured, deliberately skipped, or failed to measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Metric<T> {
    Ok { value: T },
    Skipped,
    Error { message: String },
}

impl<T> Metric<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Metric::Ok { value } => Some(value),
            _ => None,
        }
    }

    pub fn error(message: impl ToString) -> Self {
        Metric::Error {
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTally {
    pub passed: u32,
    pub total: u32,
}

/// Captured output of one tool, with the command as configured (before
/// placeholder expansion).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolLog {
    pub command: Vec<String>,
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub runs_successfully: Metric<bool>,
    pub tests: Metric<TestTally>,
    pub lint_score: Metric<f64>,
    pub typecheck_errors: Metric<u32>,
    pub raw_logs: BTreeMap<String, ToolLog>,
}

/// Tool commands for one project, as argument vectors that may contain
/// `{placeholder}`s. A missing command skips that metric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolchainConfig {
    #[serde(default)]
    pub setup_cmd: Option<Vec<String>>,
    #[serde(default)]
    pub smoke_cmd: Option<Vec<String>>,
    #[serde(default)]
    pub test_cmd: Option<Vec<String>>,
    #[serde(default)]
    pub lint_cmd: Option<Vec<String>>,
    #[serde(default)]
    pub typecheck_cmd: Option<Vec<String>>,
    #[serde(default)]
    pub smoke_timeout_secs: Option<u64>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

impl ToolchainConfig {
    fn invocation(
        &self,
        argv: &[String],
        dir: &Path,
        vars: &BTreeMap<&str, String>,
        timeout: Duration,
    ) -> Result<ToolInvocation, ToolError> {
        let env = self
            .env
            .iter()
            .map(|(k, v)| (k.clone(), expand_placeholders(std::slice::from_ref(v), vars).remove(0)))
            .collect();
        Ok(ToolInvocation::new(expand_placeholders(argv, vars), dir)?
            .with_timeout(timeout)?
            .with_env(env))
    }

    /// Runs setup, smoke, tests, lint and type check in that order, one
    /// process at a time. Failures become error metrics; nothing here aborts.
    pub fn run_checks(&self, dir: &Path, vars: &BTreeMap<&str, String>) -> CheckOutcome {
        let smoke_timeout = self.smoke_timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_SMOKE_TIMEOUT);
        let timeout = self.timeout_secs.map(Duration::from_secs).unwrap_or(DEFAULT_TOOL_TIMEOUT);
        let mut logs = BTreeMap::new();
        let mut log_run = |name: &str, argv: &[String], run: &ToolRun| {
            logs.insert(
                name.to_string(),
                ToolLog {
                    command: argv.to_vec(),
                    exit_code: run.exit_code,
                    timed_out: run.timed_out,
                    stdout: run.stdout.clone(),
                    stderr: run.stderr.clone(),
                },
            );
        };

        let mut setup_error = None;
        if let Some(argv) = &self.setup_cmd {
            match self.invocation(argv, dir, vars, timeout).and_then(|inv| run_tool(&inv)) {
                Ok(run) => {
                    if !run.succeeded() {
                        setup_error = Some(format!("setup command failed (exit {:?})", run.exit_code));
                    }
                    log_run("setup", argv, &run);
                }
                Err(e) => setup_error = Some(format!("setup command: {e}")),
            }
        }
        if let Some(e) = &setup_error {
            log::warn!("{e}; running checks anyway");
        }

        let runs_successfully = match &self.smoke_cmd {
            None => Metric::Skipped,
            Some(argv) => match self.invocation(argv, dir, vars, smoke_timeout).and_then(|inv| run_smoke(&inv)) {
                Ok(out) => {
                    log_run("smoke", argv, &out.run);
                    Metric::Ok { value: out.runs_successfully }
                }
                Err(e) => Metric::error(e),
            },
        };

        let tests = match &self.test_cmd {
            None => Metric::Skipped,
            Some(argv) => match self.invocation(argv, dir, vars, timeout).and_then(|inv| checked(&inv)) {
                Ok(run) => {
                    log_run("tests", argv, &run);
                    match parse_pytest_summary(&run.combined()) {
                        Ok(c) => Metric::Ok { value: TestTally { passed: c.passed, total: c.total() } },
                        Err(e) => Metric::error(e),
                    }
                }
                Err(e) => Metric::error(e),
            },
        };

        let lint_score = match &self.lint_cmd {
            None => Metric::Skipped,
            Some(argv) => match self.invocation(argv, dir, vars, timeout).and_then(|inv| checked(&inv)) {
                Ok(run) => {
                    log_run("lint", argv, &run);
                    match parse_lint_score(&run.combined()) {
                        Ok(score) => Metric::Ok { value: score },
                        Err(e) => Metric::error(e),
                    }
                }
                Err(e) => Metric::error(e),
            },
        };

        let typecheck_errors = match &self.typecheck_cmd {
            None => Metric::Skipped,
            Some(argv) => match self.invocation(argv, dir, vars, timeout).and_then(|inv| checked(&inv)) {
                Ok(run) => {
                    log_run("typecheck", argv, &run);
                    match parse_typecheck_summary(&run.combined()) {
                        Ok(c) => Metric::Ok { value: c.errors },
                        Err(e) => Metric::error(e),
                    }
                }
                Err(e) => Metric::error(e),
            },
        };

        CheckOutcome {
            runs_successfully,
            tests,
            lint_score,
            typecheck_errors,
            raw_logs: logs,
        }
    }
}
