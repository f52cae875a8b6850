//! Summary-line parsers for pytest, pylint and pyright output.
//!
//! All three are pure functions of the captured text.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unparseable {tool} output: {reason}")]
pub struct UnparseableOutput {
    pub tool: &'static str,
    pub reason: String,
}

static ANSI: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\x1b\[[0-9;]*[A-Za-z]").unwrap());

/// A pytest terminal summary such as `==== 1 passed, 3 failed in 0.52s ====`.
pub const PYTEST_SUMMARY_PATTERN: &str =
    r"^=*\s*((?:\d+ [a-z]+(?:, )?)+|no tests ran)(?: in [0-9.]+s(?: \([0-9:.]+\))?)?\s*=*$";
static PYTEST_SUMMARY: LazyLock<Regex> = LazyLock::new(|| Regex::new(PYTEST_SUMMARY_PATTERN).unwrap());
static PYTEST_COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+) ([a-z]+)").unwrap());

/// First rating on the last line that mentions one.
pub const PYLINT_RATING_PATTERN: &str = r"rated at (-?\d+\.\d{2})/10";
static PYLINT_RATING: LazyLock<Regex> = LazyLock::new(|| Regex::new(PYLINT_RATING_PATTERN).unwrap());

/// The closing pyright summary, `6 errors, 1 warning, 0 informations`.
pub const PYRIGHT_SUMMARY_PATTERN: &str =
    r"^\s*(\d+) errors?, (\d+) warnings?(?:, (\d+) (?:informations?|infos?|notes?))?\s*$";
static PYRIGHT_SUMMARY: LazyLock<Regex> = LazyLock::new(|| Regex::new(PYRIGHT_SUMMARY_PATTERN).unwrap());

fn clean(text: &str) -> String {
    ANSI.replace_all(text, "").replace('\r', "")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TestCounts {
    pub passed: u32,
    pub failed: u32,
    pub errors: u32,
    pub skipped: u32,
}

impl TestCounts {
    /// Tests that ran to a verdict: passes, failures and errors.
    pub fn total(&self) -> u32 {
        self.passed + self.failed + self.errors
    }
}

/// Counts from the last pytest summary line. Skips, expected failures and
/// warnings are not part of the total.
pub fn parse_pytest_summary(output: &str) -> Result<TestCounts, UnparseableOutput> {
    let text = clean(output);
    let line = text
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| PYTEST_SUMMARY.is_match(l))
        .ok_or_else(|| UnparseableOutput {
            tool: "pytest",
            reason: "no summary line".into(),
        })?;
    let mut counts = TestCounts::default();
    for caps in PYTEST_COUNT.captures_iter(line) {
        let n: u32 = caps[1].parse().map_err(|_| UnparseableOutput {
            tool: "pytest",
            reason: format!("count out of range in `{line}`"),
        })?;
        match &caps[2] {
            "passed" | "xpassed" => counts.passed += n,
            "failed" => counts.failed += n,
            "error" | "errors" => counts.errors += n,
            "skipped" => counts.skipped += n,
            _ => {}
        }
    }
    Ok(counts)
}

pub fn parse_lint_score(output: &str) -> Result<f64, UnparseableOutput> {
    let text = clean(output);
    let caps = text
        .lines()
        .rev()
        .find_map(|l| PYLINT_RATING.captures(l))
        .ok_or_else(|| UnparseableOutput {
            tool: "pylint",
            reason: "no `rated at X/10` line".into(),
        })?;
    let score: f64 = caps[1].parse().expect("regex admits only decimals");
    if !(0.0..=10.0).contains(&score) {
        return Err(UnparseableOutput {
            tool: "pylint",
            reason: format!("rating {score} outside [0, 10]"),
        });
    }
    Ok(score)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypecheckCounts {
    pub errors: u32,
    pub warnings: u32,
}

pub fn parse_typecheck_summary(output: &str) -> Result<TypecheckCounts, UnparseableOutput> {
    let text = clean(output);
    let caps = text
        .lines()
        .rev()
        .find_map(|l| PYRIGHT_SUMMARY.captures(l))
        .ok_or_else(|| UnparseableOutput {
            tool: "pyright",
            reason: "no `N errors, M warnings` summary".into(),
        })?;
    let num = |i: usize| {
        caps[i].parse::<u32>().map_err(|_| UnparseableOutput {
            tool: "pyright",
            reason: "count out of range".into(),
        })
    };
    Ok(TypecheckCounts {
        errors: num(1)?,
        warnings: num(2)?,
    })
}
