//! Operator entry point: run scenario scripts through the full pipeline,
//! replay persisted traces, and compare run summaries.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commdiag::analyzer::AnalyzerConfig;
use commdiag::collector::Collector;
use commdiag::pipeline::{
    format_report_table, parse_summary, replay_records, run_scenario, write_summary, ReportRow,
    RunOptions, RunSummary,
};
use commdiag::probe::ProbeConfig;
use commdiag::sim::Scenario;

#[derive(Parser)]
#[command(
    name = "commdiag",
    about = "Diagnose slow/hang anomalies in simulated collective communication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario script end to end and diagnose it.
    Run {
        /// Scenario script path.
        scenario: PathBuf,
        /// Analyzer or probe override, repeatable: KEY=VAL.
        #[arg(long = "config", value_name = "KEY=VAL")]
        config: Vec<String>,
        /// Override the script's cluster seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the run summary here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Persist the snapshot stream here for later replay.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Re-diagnose a persisted snapshot stream.
    Replay {
        /// Persisted trace path.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "config", value_name = "KEY=VAL")]
        config: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate one or more run summaries side by side.
    Report {
        /// Summary files written by `run --out`.
        summaries: Vec<PathBuf>,
        /// Emit comma-separated values instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
}

fn apply_overrides(
    analyzer: &mut AnalyzerConfig,
    probe: &mut ProbeConfig,
    overrides: &[String],
) -> Result<(), String> {
    for kv in overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VAL, got '{kv}'"))?;
        // Try the analyzer first, then the probe; both failing means the
        // key is unknown.
        if analyzer.apply_override(key, value).is_ok() {
            continue;
        }
        probe
            .apply_override(key, value)
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn print_summary(summary: &RunSummary) {
    for (i, report) in summary.reports.iter().enumerate() {
        println!(
            "report {report} det_latency_us={} loc_latency_us={}",
            summary.detection_latency_us[i]
                .map(|v| v.to_string())
                .unwrap_or_else(|| "-".into()),
            summary.location_latency_us[i],
        );
    }
    println!(
        "summary scenario={} rounds={} snapshots={} reports={} sim_time_us={} wall_ms={}",
        summary.scenario,
        summary.rounds_posted,
        summary.snapshots_emitted,
        summary.reports.len(),
        summary.sim_end_us,
        summary.wall_ms,
    );
    for res in &summary.expectation_results {
        println!("expectation {:?} matched={}", res.expectation, res.matched);
    }
    println!("verdict {}", if summary.passed { "pass" } else { "fail" });
}

fn write_out(path: &Path, summary: &RunSummary) -> Result<(), String> {
    std::fs::write(path, write_summary(summary)).map_err(|e| e.to_string())
}

fn cmd_run(
    scenario_path: &Path,
    config: &[String],
    seed: Option<u64>,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(scenario_path)
        .map_err(|e| format!("{}: {e}", scenario_path.display()))?;
    let name = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let scenario = Scenario::parse(&name, &text).map_err(|e| e.to_string())?;
    let mut options = RunOptions {
        seed,
        ..Default::default()
    };
    apply_overrides(&mut options.analyzer, &mut options.probe, config)?;
    let run = run_scenario(&scenario, &options).map_err(|e| e.to_string())?;
    print_summary(&run.summary);
    if let Some(path) = out {
        write_out(path, &run.summary)?;
    }
    if let Some(path) = trace {
        let mut collector = Collector::new();
        for record in run.records {
            collector.ingest(record);
        }
        collector.persist(path).map_err(|e| e.to_string())?;
    }
    Ok(if run.summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_replay(trace: &Path, config: &[String], out: Option<&Path>) -> Result<ExitCode, String> {
    let records = Collector::load(trace).map_err(|e| format!("{}: {e}", trace.display()))?;
    let mut analyzer = AnalyzerConfig::default();
    let mut probe = ProbeConfig::default();
    apply_overrides(&mut analyzer, &mut probe, config)?;
    let name = trace
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    let summary = replay_records(&name, &records, &analyzer).map_err(|e| e.to_string())?;
    print_summary(&summary);
    if let Some(path) = out {
        write_out(path, &summary)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(summaries: &[PathBuf], csv: bool) -> Result<ExitCode, String> {
    if summaries.is_empty() {
        return Err("report needs at least one summary file".into());
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    for path in summaries {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        rows.extend(parse_summary(&text).map_err(|e| e.to_string())?);
    }
    print!("{}", format_report_table(&rows, csv));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
            trace,
        } => cmd_run(scenario, config, *seed, out.as_deref(), trace.as_deref()),
        Command::Replay { trace, config, out } => cmd_replay(trace, config, out.as_deref()),
        Command::Report { summaries, csv } => cmd_report(summaries, *csv),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
