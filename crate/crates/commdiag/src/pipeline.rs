//! End-to-end scenario execution: simulator, per-rank probes, collector,
//! and analyzer wired together, plus run summaries, expectation checking,
//! and the cross-run comparison table.

use std::fmt::Write as _;
use std::time::Instant;

use crate::analyzer::{diagnose, AnalyzerConfig, AnomalyKind, AnomalyReport};
use crate::collector::{Collector, CommRecord, Record, SnapshotRecord};
use crate::error::{Error, Result};
use crate::probe::{Probe, ProbeConfig};
use crate::sim::{
    Cluster, Expectation, FaultKind, Scenario, ScenarioStep, SimHooks, TraceEvent,
};
use crate::trace::{CommunicatorId, OperationDescriptor, RankId, SnapshotReason, TraceId};

/// Knobs for one scenario run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub analyzer: AnalyzerConfig,
    pub probe: ProbeConfig,
    /// Replaces the script's cluster seed.
    pub seed: Option<u64>,
    /// Record per-unit trace events. On by default so a run returns its
    /// full ordered event trace; bulk sweeps turn it off.
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            analyzer: AnalyzerConfig::default(),
            probe: ProbeConfig::default(),
            seed: None,
            record_trace: true,
        }
    }
}

/// Diagnosed anomaly class an injected fault must map onto.
pub fn expected_kind(fault: FaultKind) -> AnomalyKind {
    match fault {
        FaultKind::NotEnteredHang => AnomalyKind::H1NotEntered,
        FaultKind::InconsistentHang => AnomalyKind::H2Inconsistent,
        FaultKind::HardwareFault => AnomalyKind::H3HardwareFault,
        FaultKind::CompSlow => AnomalyKind::S1CompSlow,
        FaultKind::CommSlow => AnomalyKind::S2CommSlow,
        FaultKind::MixedSlow => AnomalyKind::S3MixedSlow,
    }
}

/// One checked expectation with its outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationResult {
    pub expectation: Expectation,
    pub matched: bool,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: String,
    pub rounds_posted: u64,
    pub snapshots_emitted: u64,
    pub sim_end_us: u64,
    pub wall_ms: u64,
    pub reports: Vec<AnomalyReport>,
    /// Simulated-time detection latency per report, measured from the
    /// posting of the matching fault's trigger round; absent when no
    /// injected fault matches the report.
    pub detection_latency_us: Vec<Option<u64>>,
    /// Simulated time between detection and location per report.
    pub location_latency_us: Vec<u64>,
    /// Whether a declared expectation consumed the report.
    pub report_matched: Vec<bool>,
    pub expectation_results: Vec<ExpectationResult>,
    pub passed: bool,
}

/// Everything a run produced.
pub struct ScenarioRun {
    pub summary: RunSummary,
    /// The collector stream, persistable and replayable.
    pub records: Vec<Record>,
    /// Ordered simulator event trace.
    pub trace: Vec<TraceEvent>,
}

struct ProbeHooks<'a> {
    probes: &'a mut [Probe],
}

impl SimHooks for ProbeHooks<'_> {
    fn on_post(
        &mut self,
        rank: RankId,
        trace_id: TraceId,
        descriptor: OperationDescriptor,
        channels: usize,
        now_us: u64,
    ) {
        self.probes[rank.0 as usize].on_post(trace_id, descriptor, channels, now_us);
    }

    fn on_enter(&mut self, rank: RankId, comm: CommunicatorId, round: u64, now_us: u64) {
        self.probes[rank.0 as usize].on_enter(comm, round, now_us);
    }

    fn on_record(
        &mut self,
        rank: RankId,
        comm: CommunicatorId,
        round: u64,
        channel: usize,
        send: bool,
        now_us: u64,
    ) {
        self.probes[rank.0 as usize].on_record(comm, round, channel, send, now_us);
    }

    fn on_complete(&mut self, rank: RankId, comm: CommunicatorId, round: u64, now_us: u64) {
        self.probes[rank.0 as usize].on_complete(comm, round, now_us);
    }
}

/// Executes a parsed scenario end to end and diagnoses its stream.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<ScenarioRun> {
    let started = Instant::now();
    options.probe.validate()?;
    options.analyzer.validate()?;

    let mut config = scenario.cluster.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let mut cluster = Cluster::build(config)?;
    cluster.record_unit_events = options.record_trace;
    for fault in &scenario.faults {
        cluster.add_fault(fault.clone())?;
    }
    let mut probes: Vec<Probe> = (0..cluster.config().num_ranks)
        .map(|r| Probe::new(RankId(r), options.probe))
        .collect::<Result<Vec<_>>>()?;
    let mut collector = Collector::new();
    let mut rounds_posted = 0u64;
    let mut snapshots = 0u64;
    // Post time of each round, for fault-onset latency accounting.
    let mut post_times: std::collections::BTreeMap<(CommunicatorId, u64), u64> =
        Default::default();

    for step in &scenario.steps {
        match step {
            ScenarioStep::CreateComm {
                id,
                algorithm,
                members,
            } => {
                cluster.create_communicator_with_id(*id, members.clone(), *algorithm)?;
                let comm = cluster.communicator(*id).unwrap();
                collector.ingest(Record::Comm(CommRecord::from_communicator(comm)));
            }
            ScenarioStep::Round {
                comm,
                round,
                descriptor,
            } => {
                post_times.insert((*comm, *round), cluster.now());
                let mut hooks = ProbeHooks {
                    probes: &mut probes,
                };
                cluster.post_collective(*comm, *descriptor, *round, &mut hooks)?;
                rounds_posted += 1;
            }
            ScenarioStep::Advance { by_us } => {
                let target = cluster.now() + by_us;
                let mut hooks = ProbeHooks {
                    probes: &mut probes,
                };
                let completions = cluster.advance(target, &mut hooks);
                // Emit completion snapshots at their instants and synthesize
                // the heartbeats that fell due, merged in time order.
                let mut emissions: Vec<(u64, u32, u8, CommunicatorId, u64)> = completions
                    .iter()
                    .map(|c| (c.at_us, c.rank.0, 0u8, c.comm, c.round))
                    .collect();
                for probe in probes.iter_mut() {
                    for (comm, round, at) in probe.drain_heartbeats(target) {
                        emissions.push((at, probe.rank().0, 1u8, comm, round));
                    }
                }
                emissions.sort_unstable();
                for (at, rank, kind, comm, round) in emissions {
                    let reason = if kind == 0 {
                        SnapshotReason::Completion
                    } else {
                        SnapshotReason::Heartbeat
                    };
                    // Released communicators stop producing snapshots.
                    if let Ok(snap) = probes[rank as usize].emit_snapshot(comm, round, at, reason)
                    {
                        snapshots += 1;
                        collector.ingest(Record::Snapshot(SnapshotRecord::new(at, snap)));
                    }
                }
            }
            ScenarioStep::Destroy { comm } => {
                for probe in probes.iter_mut() {
                    probe.release(*comm);
                }
            }
        }
    }

    let reports = diagnose(collector.records(), &options.analyzer)?;
    let summary = summarize(
        scenario,
        reports,
        rounds_posted,
        snapshots,
        cluster.now(),
        started.elapsed().as_millis() as u64,
        &post_times,
    );
    Ok(ScenarioRun {
        summary,
        records: collector.records().to_vec(),
        trace: cluster.take_trace(),
    })
}

/// Analyzer-only pass over a stored record stream.
pub fn replay_records(
    name: &str,
    records: &[Record],
    analyzer: &AnalyzerConfig,
) -> Result<RunSummary> {
    let started = Instant::now();
    let reports = diagnose(records, analyzer)?;
    let snapshots = records
        .iter()
        .filter(|r| matches!(r, Record::Snapshot(_)))
        .count() as u64;
    let sim_end_us = records
        .iter()
        .filter_map(|r| r.emitted_at_us())
        .max()
        .unwrap_or(0);
    let n = reports.len();
    Ok(RunSummary {
        scenario: name.to_string(),
        rounds_posted: 0,
        snapshots_emitted: snapshots,
        sim_end_us,
        wall_ms: started.elapsed().as_millis() as u64,
        detection_latency_us: vec![None; n],
        location_latency_us: reports
            .iter()
            .map(|r| r.located_at_us - r.detected_at_us)
            .collect(),
        report_matched: vec![false; n],
        reports,
        expectation_results: Vec::new(),
        passed: true,
    })
}

fn summarize(
    scenario: &Scenario,
    reports: Vec<AnomalyReport>,
    rounds_posted: u64,
    snapshots_emitted: u64,
    sim_end_us: u64,
    wall_ms: u64,
    post_times: &std::collections::BTreeMap<(CommunicatorId, u64), u64>,
) -> RunSummary {
    // Latencies, measured from the trigger round's posting.
    let mut detection_latency_us = Vec::with_capacity(reports.len());
    let mut location_latency_us = Vec::with_capacity(reports.len());
    for report in &reports {
        let onset = scenario
            .faults
            .iter()
            .find(|f| {
                expected_kind(f.kind) == report.kind
                    && report.root_cause_ranks.contains(&f.victim)
                    && f.comm.is_none_or(|c| c == report.comm)
            })
            .and_then(|f| post_times.get(&(report.comm, f.trigger_round)).copied());
        detection_latency_us.push(onset.map(|t| report.detected_at_us.saturating_sub(t)));
        location_latency_us.push(report.located_at_us - report.detected_at_us);
    }

    // Expectation matching: each declared anomaly must be satisfied by a
    // distinct report, and when any expectation is declared, no report may
    // go unclaimed.
    let mut consumed = vec![false; reports.len()];
    let mut expectation_results = Vec::new();
    for expectation in &scenario.expectations {
        let matched = match expectation {
            Expectation::NoReports => reports.is_empty(),
            Expectation::Anomaly { kind, victim } => {
                let want = expected_kind(*kind);
                match reports.iter().enumerate().find(|(i, r)| {
                    !consumed[*i] && r.kind == want && r.root_cause_ranks.contains(victim)
                }) {
                    Some((i, _)) => {
                        consumed[i] = true;
                        true
                    }
                    None => false,
                }
            }
        };
        expectation_results.push(ExpectationResult {
            expectation: expectation.clone(),
            matched,
        });
    }
    let passed = expectation_results.iter().all(|e| e.matched)
        && (scenario.expectations.is_empty() || consumed.iter().all(|&c| c));

    RunSummary {
        scenario: scenario.name.clone(),
        rounds_posted,
        snapshots_emitted,
        sim_end_us,
        wall_ms,
        reports,
        detection_latency_us,
        location_latency_us,
        report_matched: consumed,
        expectation_results,
        passed,
    }
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

/// Renders a run summary as stable, machine-parseable text. Wall time is
/// deliberately excluded so the output is byte-identical across runs of
/// the same scenario, seed, and configuration.
pub fn write_summary(summary: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", summary.scenario);
    let _ = writeln!(out, "rounds {}", summary.rounds_posted);
    let _ = writeln!(out, "snapshots {}", summary.snapshots_emitted);
    let _ = writeln!(out, "sim_time_us {}", summary.sim_end_us);
    for (i, report) in summary.reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "report {report} det_latency_us={} loc_latency_us={} matched={}",
            fmt_opt_u64(summary.detection_latency_us[i]),
            summary.location_latency_us[i],
            summary.report_matched[i],
        );
    }
    for res in &summary.expectation_results {
        let what = match &res.expectation {
            Expectation::NoReports => "none".to_string(),
            Expectation::Anomaly { kind, victim } => {
                format!("{} {victim}", expected_kind(*kind))
            }
        };
        let _ = writeln!(out, "expect {what} matched={}", res.matched);
    }
    let _ = writeln!(
        out,
        "verdict {}",
        if summary.passed { "pass" } else { "fail" }
    );
    out
}

/// One row of the cross-scenario comparison table.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub scenario: String,
    pub kind: String,
    pub detected: bool,
    pub located: bool,
    pub root_correct: Option<bool>,
    pub detection_latency_us: Option<u64>,
    pub location_latency_us: Option<u64>,
}

/// Parses a summary document back into table rows.
pub fn parse_summary(text: &str) -> Result<Vec<ReportRow>> {
    let mut scenario = String::from("?");
    let mut rows = Vec::new();
    let mut verdict_pass = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("scenario ") {
            scenario = rest.to_string();
        } else if let Some(rest) = line.strip_prefix("report ") {
            let field = |key: &str| -> Option<String> {
                rest.split_whitespace()
                    .find_map(|t| t.strip_prefix(&format!("{key}=")).map(str::to_string))
            };
            let kind = field("kind")
                .ok_or_else(|| Error::MalformedRecord("report line without kind".into()))?;
            let roots = field("roots").unwrap_or_default();
            let det = field("det_latency_us").and_then(|v| v.parse().ok());
            let loc = field("loc_latency_us").and_then(|v| v.parse().ok());
            let matched = field("matched").map(|v| v == "true");
            rows.push(ReportRow {
                scenario: scenario.clone(),
                kind,
                detected: true,
                located: !roots.is_empty(),
                root_correct: matched,
                detection_latency_us: det,
                location_latency_us: loc,
            });
        } else if let Some(rest) = line.strip_prefix("verdict ") {
            verdict_pass = Some(rest == "pass");
        }
    }
    if rows.is_empty() {
        rows.push(ReportRow {
            scenario,
            kind: "-".into(),
            detected: false,
            located: false,
            root_correct: verdict_pass,
            detection_latency_us: None,
            location_latency_us: None,
        });
    }
    Ok(rows)
}

/// Renders the comparison table, plain text or comma-separated.
pub fn format_report_table(rows: &[ReportRow], csv: bool) -> String {
    let mut out = String::new();
    let header = [
        "scenario",
        "kind",
        "detected",
        "located",
        "root_correct",
        "det_latency_us",
        "loc_latency_us",
    ];
    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.scenario.clone(),
                r.kind.clone(),
                yes_no(r.detected),
                yes_no(r.located),
                r.root_correct.map(yes_no).unwrap_or_else(|| "-".into()),
                fmt_opt_u64(r.detection_latency_us),
                fmt_opt_u64(r.location_latency_us),
            ]
        })
        .collect();
    if csv {
        let _ = writeln!(out, "{}", header.join(","));
        for row in &cells {
            let _ = writeln!(out, "{}", row.join(","));
        }
    } else {
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let render = |cols: [&str; 7]| -> String {
            cols.iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", render(header).trim_end());
        for row in &cells {
            let cols: [&str; 7] = std::array::from_fn(|i| row[i].as_str());
            let _ = writeln!(out, "{}", render(cols).trim_end());
        }
    }
    out
}

fn yes_no(b: bool) -> String {
    if b {
        "yes".into()
    } else {
        "no".into()
    }
}
