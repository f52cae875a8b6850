use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use migrate_core::analyzer::{analyze_tree, TargetsManifest};
use migrate_core::experiment::{
    build_gateway, emit_report, load_report, persist_report, prepare_output_dir, run_experiment, seed_replay_store,
    Context, ExperimentConfig, ReportFormat, Selection, META_FILE, WORKSPACES_DIR,
};
use migrate_core::gateway::Mode;
use migrate_core::prompt::Strategy;
use migrate_core::workspace::Phase;

/// LLM-driven library migration experiments.
#[derive(Parser)]
#[command(name = "migrate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy × phase matrix and write the report into --out.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Falls back to `mode` in the config file.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Restrict to these strategies (repeatable).
        #[arg(long = "strategy", value_parser = parse_strategy)]
        strategies: Vec<Strategy>,
        /// Restrict to these phases (repeatable).
        #[arg(long = "phase", value_parser = parse_phase)]
        phases: Vec<Phase>,
        #[arg(long)]
        out: PathBuf,
        /// Cells to run concurrently; overrides `jobs` in the config.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the report of a finished run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Analyze one tree against a targets manifest and print JSON.
    Analyze {
        tree: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Store canned responses so that replay runs can serve them.
    Seed {
        #[arg(long)]
        config: PathBuf,
        /// Directory laid out as <strategy>/<path of subject file>.txt.
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value = "1970-01-01T00:00:00Z")]
        created_at: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse::<Strategy>().map_err(|e| e.to_string())
}

fn parse_phase(s: &str) -> Result<Phase, String> {
    s.parse()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            mode,
            strategies,
            phases,
            out,
            jobs,
        } => run(&config, mode, strategies, phases, &out, jobs),
        Command::Report { run_dir, format } => {
            let report = load_report(&run_dir)?;
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Markdown => ReportFormat::Markdown,
            };
            print!("{}", emit_report(&report, format));
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { tree, manifest } => {
            let manifest = TargetsManifest::load(&manifest)?;
            let report = analyze_tree(&tree, &manifest)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Seed {
            config,
            responses,
            created_at,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let (seeded, missing) = seed_replay_store(&config, &responses, &created_at)?;
            for m in &missing {
                eprintln!("no response for {} {}", m.cell, m.path);
            }
            println!("stored {} responses, {} missing", seeded.len(), missing.len());
            Ok(if missing.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn run(
    config_path: &Path,
    mode: Option<Mode>,
    strategies: Vec<Strategy>,
    phases: Vec<Phase>,
    out: &Path,
    jobs: Option<usize>,
) -> Result<ExitCode> {
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let mut config = ExperimentConfig::load(config_path)?;
    let mode = mode
        .or(config.mode)
        .ok_or_else(|| anyhow::anyhow!("no mode given: pass --mode or set `mode` in the config"))?;
    if jobs.is_some() {
        config.jobs = jobs;
        config.validate()?;
    }
    let gateway = build_gateway(&config, mode)?;
    let ctx = Context::new(&config, &gateway, mode)?;
    let selection = Selection {
        strategies: (!strategies.is_empty()).then_some(strategies),
        phases: (!phases.is_empty()).then_some(phases),
    };

    prepare_output_dir(out)?;
    let report = run_experiment(&ctx, &selection, &out.join(WORKSPACES_DIR))?;
    persist_report(&report, out)?;

    // wall-clock data stays out of the report so replay runs compare equal
    let meta = serde_json::json!({
        "config": config_path.display().to_string(),
        "mode": mode,
        "started_at": started_at.to_rfc3339(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
        "duration_ms": clock.elapsed().as_millis() as u64,
    });
    let meta_path = out.join(META_FILE);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;

    print!("{}", emit_report(&report, ReportFormat::Markdown));
    let failed: Vec<String> = report
        .cells
        .iter()
        .filter(|c| !c.completed())
        .map(|c| format!("{}/{}", c.strategy.as_str(), c.phase.as_str()))
        .collect();
    if report.all_cells_completed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("incomplete cells: {}", if failed.is_empty() { "baseline or post-fix".into() } else { failed.join(", ") });
        Ok(ExitCode::FAILURE)
    }
}
