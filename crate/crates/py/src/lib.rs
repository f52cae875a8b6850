//! Python bindings for the migration harness.

use std::path::PathBuf;

use migrate_core::analyzer::{analyze_tree as analyze_dir, TargetsManifest};
use migrate_core::experiment::{
    build_gateway, emit_report as emit, parse_report, persist_report, prepare_output_dir, run_experiment as run_all,
    Context, ExperimentConfig, ExperimentReport, ReportFormat, Selection, WORKSPACES_DIR,
};
use migrate_core::gateway::{extract_code as extract, CompletionRequest, Mode};
use migrate_core::prompt::{default_template, render, Strategy, DEFAULT_EXAMPLE_CODE};
use migrate_core::toolchain::{parse_lint_score, parse_pytest_summary, parse_typecheck_summary};
use migrate_core::workspace::{tree_digest as digest_dir, Phase};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(migrate_py, MigrateError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    MigrateError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_python<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

#[pyclass(module = "migrate_py", frozen, get_all)]
struct RenderedPrompt {
    system_message: String,
    user_message: String,
}

#[pymethods]
impl RenderedPrompt {
    fn __repr__(&self) -> String {
        format!("RenderedPrompt(user_message=<{} chars>)", self.user_message.len())
    }
}

/// Renders the prompt for one file with the default template.
#[pyfunction]
#[pyo3(signature = (strategy, subject_code, example_code=None))]
fn render_prompt(strategy: &str, subject_code: &str, example_code: Option<&str>) -> PyResult<RenderedPrompt> {
    let strategy: Strategy = strategy.parse().map_err(value_err)?;
    let template = default_template()
        .with_example_code(example_code.unwrap_or(DEFAULT_EXAMPLE_CODE))
        .map_err(value_err)?;
    let prompt = render(strategy, &template, subject_code).map_err(err)?;
    Ok(RenderedPrompt {
        system_message: prompt.system_message,
        user_message: prompt.user_message,
    })
}

/// Code between the markers of a raw model response.
#[pyfunction]
#[pyo3(signature = (raw, start_marker="### START CODE ###", end_marker="### END CODE ###"))]
fn extract_code(raw: &str, start_marker: &str, end_marker: &str) -> PyResult<String> {
    Ok(extract(raw, start_marker, end_marker).map_err(err)?.code)
}

/// Replay-store key of a completion request.
#[pyfunction]
#[pyo3(signature = (model_id, system_message, user_message, temperature=0.0))]
fn request_digest(model_id: &str, system_message: &str, user_message: &str, temperature: f64) -> PyResult<String> {
    let request = CompletionRequest::new(model_id, system_message, user_message)
        .and_then(|r| r.with_temperature(temperature))
        .map_err(value_err)?;
    Ok(request.digest())
}

#[pyfunction]
fn lint_score(output: &str) -> PyResult<f64> {
    parse_lint_score(output).map_err(err)
}

/// `(passed, total)` from test runner output.
#[pyfunction]
fn test_tally(output: &str) -> PyResult<(u32, u32)> {
    let counts = parse_pytest_summary(output).map_err(err)?;
    Ok((counts.passed, counts.total()))
}

#[pyfunction]
fn typecheck_errors(output: &str) -> PyResult<u32> {
    Ok(parse_typecheck_summary(output).map_err(err)?.errors)
}

#[pyfunction]
fn tree_digest(root: PathBuf) -> PyResult<String> {
    digest_dir(&root).map_err(err)
}

/// Analyzer report for a source tree, as plain Python data.
#[pyfunction]
fn analyze_tree<'py>(py: Python<'py>, root: PathBuf, manifest: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let manifest = TargetsManifest::load(&manifest).map_err(err)?;
    let report = analyze_dir(&root, &manifest).map_err(err)?;
    to_python(py, &serde_json::to_string(&report).map_err(err)?)
}

#[pyclass(module = "migrate_py", frozen)]
struct Report {
    inner: ExperimentReport,
}

#[pymethods]
impl Report {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Report {
            inner: parse_report(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        emit(&self.inner, ReportFormat::Json)
    }

    fn to_markdown(&self) -> String {
        emit(&self.inner, ReportFormat::Markdown)
    }

    fn all_cells_completed(&self) -> bool {
        self.inner.all_cells_completed()
    }

    /// Metrics of one cell as plain Python data, or None.
    fn metrics<'py>(&self, py: Python<'py>, strategy: &str, phase: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        let strategy: Strategy = strategy.parse().map_err(value_err)?;
        let phase: Phase = phase.parse().map_err(value_err)?;
        match self.inner.cell(strategy, phase).and_then(|c| c.metrics()) {
            Some(m) => Ok(Some(to_python(py, &serde_json::to_string(m).map_err(err)?)?)),
            None => Ok(None),
        }
    }

    fn __repr__(&self) -> String {
        format!("Report(cells={}, baselines={})", self.inner.cells.len(), self.inner.baselines.len())
    }
}

/// Runs the experiment described by a config file and writes the report
/// into `out`. The GIL is released while cells run.
#[pyfunction]
#[pyo3(signature = (config, out, mode="replay", strategies=None, phases=None))]
fn run_experiment(
    py: Python<'_>,
    config: PathBuf,
    out: PathBuf,
    mode: &str,
    strategies: Option<Vec<String>>,
    phases: Option<Vec<String>>,
) -> PyResult<Report> {
    let mode: Mode = mode.parse().map_err(value_err)?;
    let strategies = strategies
        .map(|v| v.iter().map(|s| s.parse::<Strategy>().map_err(value_err)).collect::<PyResult<Vec<_>>>())
        .transpose()?;
    let phases = phases
        .map(|v| v.iter().map(|s| s.parse::<Phase>().map_err(value_err)).collect::<PyResult<Vec<_>>>())
        .transpose()?;
    let report = py.detach(|| {
        let config = ExperimentConfig::load(&config)?;
        let gateway = build_gateway(&config, mode)?;
        let ctx = Context::new(&config, &gateway, mode)?;
        prepare_output_dir(&out)?;
        let report = run_all(&ctx, &Selection { strategies, phases }, &out.join(WORKSPACES_DIR))?;
        persist_report(&report, &out)?;
        Ok::<_, migrate_core::experiment::ExperimentError>(report)
    });
    Ok(Report {
        inner: report.map_err(err)?,
    })
}

#[pymodule]
fn migrate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MigrateError", m.py().get_type::<MigrateError>())?;
    m.add_class::<RenderedPrompt>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(extract_code, m)?)?;
    m.add_function(wrap_pyfunction!(request_digest, m)?)?;
    m.add_function(wrap_pyfunction!(lint_score, m)?)?;
    m.add_function(wrap_pyfunction!(test_tally, m)?)?;
    m.add_function(wrap_pyfunction!(typecheck_errors, m)?)?;
    m.add_function(wrap_pyfunction!(tree_digest, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_tree, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
