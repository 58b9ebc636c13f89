//! The stateful decision analyzer: ingests the snapshot stream, evaluates
//! every communicator once per detection window, and emits located
//! anomaly reports.
//!
//! Evaluation is tick-driven. Ticks land on detection-window boundaries of
//! the simulated clock; each tick first folds the window's completed
//! rounds into the baseline and the slow-detection pipeline, then checks
//! in-flight rounds against the hang threshold. An alert latches until the
//! condition clears, so one anomaly produces one report, not one per tick.

use std::collections::{BTreeMap, BTreeSet};

use crate::analyzer::baseline::{BaselineSource, BaselineState};
use crate::analyzer::config::AnalyzerConfig;
use crate::analyzer::detect::{
    detect_hang, detect_slow, estimate_theta, is_barrier, InFlightView, RoundDurations,
    SlowCounter,
};
use crate::analyzer::locate::{
    comparison_groups, locate_hang, locate_slow, HangContext, HangRankState, SlowContext,
    SlowRankState,
};
use crate::analyzer::report::AnomalyReport;
use crate::collector::{CommRecord, Record, SnapshotRecord};
use crate::error::{Error, Result};
use crate::trace::{CommunicatorId, OperationDescriptor, RankId, Rate, SnapshotReason};

/// Latest knowledge about one rank's execution of one round.
#[derive(Debug, Clone)]
struct RankView {
    enter_us: u64,
    complete_us: Option<u64>,
    duration_us: u64,
    total_count: u64,
    min_rate: Option<Rate>,
    descriptor: OperationDescriptor,
}

#[derive(Debug, Clone, Default)]
struct RoundView {
    per_rank: BTreeMap<RankId, RankView>,
    fully_complete_at: Option<u64>,
}

struct CommState {
    record: CommRecord,
    groups: Vec<Vec<RankId>>,
    rank_latest_round: BTreeMap<RankId, u64>,
    rounds: BTreeMap<u64, RoundView>,
    /// Rounds fully completed but not yet folded into a detection window,
    /// in completion order.
    pending: Vec<(u64, u64)>, // (completed_at, round)
    completed_seq: u64,
    baseline: BaselineState,
    counter: SlowCounter,
    ratio_history: Vec<f64>,
    hang_reported: BTreeSet<u64>,
    slow_latched: bool,
}

/// Streaming anomaly analyzer over collector records.
pub struct Analyzer {
    config: AnalyzerConfig,
    comms: BTreeMap<CommunicatorId, CommState>,
    malformed: u64,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Analyzer {
            config,
            comms: BTreeMap::new(),
            malformed: 0,
        })
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    /// Snapshots that could not be attributed and were skipped.
    pub fn malformed_count(&self) -> u64 {
        self.malformed
    }

    pub fn register_communicator(&mut self, record: CommRecord) -> Result<()> {
        if self.comms.contains_key(&record.id) {
            return Ok(()); // idempotent re-registration
        }
        let groups = comparison_groups(&record)?;
        let baseline = BaselineState::new(&self.config);
        self.comms.insert(
            record.id,
            CommState {
                record,
                groups,
                rank_latest_round: BTreeMap::new(),
                rounds: BTreeMap::new(),
                pending: Vec::new(),
                completed_seq: 0,
                baseline,
                counter: SlowCounter::default(),
                ratio_history: Vec::new(),
                hang_reported: BTreeSet::new(),
                slow_latched: false,
            },
        );
        Ok(())
    }

    /// Rank groups whose metrics are directly comparable for a registered
    /// communicator.
    pub fn comparison_groups(&self, comm: CommunicatorId) -> Result<&[Vec<RankId>]> {
        self.comms
            .get(&comm)
            .map(|s| s.groups.as_slice())
            .ok_or(Error::UnknownCommunicator(comm.0))
    }

    /// Feeds one record. Snapshots for unknown communicators are counted
    /// as malformed and skipped; ingestion never halts.
    pub fn ingest(&mut self, record: &Record) {
        match record {
            Record::Comm(c) => {
                if self.register_communicator(c.clone()).is_err() {
                    self.malformed += 1;
                }
            }
            Record::Snapshot(rec) => {
                if self.ingest_snapshot(rec).is_err() {
                    self.malformed += 1;
                }
            }
        }
    }

    fn ingest_snapshot(&mut self, rec: &SnapshotRecord) -> Result<()> {
        let s = &rec.snapshot;
        let comm_id = s.trace_id.comm_id;
        let state = self
            .comms
            .get_mut(&comm_id)
            .ok_or(Error::UnknownCommunicator(comm_id.0))?;
        if !state.record.members.contains(&s.rank) {
            return Err(Error::MalformedRecord(format!(
                "rank {} is not a member of communicator {comm_id}",
                s.rank
            )));
        }
        let round = s.trace_id.op_counter as u64;
        let latest = state.rank_latest_round.entry(s.rank).or_insert(round);
        *latest = (*latest).max(round);
        let view = state.rounds.entry(round).or_default();
        view.per_rank.insert(
            s.rank,
            RankView {
                enter_us: s.enter_time_us,
                complete_us: s.complete_time_us,
                duration_us: s.duration_us,
                total_count: s.total_count(),
                min_rate: s.min_rate(),
                descriptor: s.descriptor,
            },
        );
        if s.reason == SnapshotReason::Completion
            && view.fully_complete_at.is_none()
            && state
                .record
                .members
                .iter()
                .all(|m| view.per_rank.get(m).is_some_and(|v| v.complete_us.is_some()))
        {
            let at = view
                .per_rank
                .values()
                .filter_map(|v| v.complete_us)
                .max()
                .unwrap();
            view.fully_complete_at = Some(at);
            state.pending.push((at, round));
        }
        Ok(())
    }

    /// Evaluates every communicator as of `now_us` and returns the reports
    /// this tick produced. Cost is linear in member count.
    pub fn tick(&mut self, now_us: u64) -> Vec<AnomalyReport> {
        let mut reports = Vec::new();
        for (&comm_id, state) in self.comms.iter_mut() {
            reports.extend(Self::tick_comm(&self.config, comm_id, state, now_us));
        }
        reports
    }

    fn tick_comm(
        config: &AnalyzerConfig,
        comm_id: CommunicatorId,
        state: &mut CommState,
        now_us: u64,
    ) -> Vec<AnomalyReport> {
        let mut reports = Vec::new();

        // Fold the window's completed rounds into the baseline and the
        // slow pipeline. Barriers are synchronization noise and are
        // dropped from both.
        let mut due: Vec<(u64, u64)> = Vec::new();
        state.pending.retain(|&(at, round)| {
            if at <= now_us {
                due.push((at, round));
                false
            } else {
                true
            }
        });
        due.sort_unstable();
        let mut window = Vec::new();
        let mut consumed = Vec::new();
        for (at, round) in due {
            consumed.push(round);
            let view = &state.rounds[&round];
            if view
                .per_rank
                .values()
                .next()
                .is_some_and(|v| is_barrier(&v.descriptor, config))
            {
                continue;
            }
            let t_max = view.per_rank.values().map(|v| v.duration_us).max().unwrap();
            let t_min = view.per_rank.values().map(|v| v.duration_us).min().unwrap();
            state.completed_seq += 1;
            // Baseline rounds arrive in completion order by construction.
            let _ = state.baseline.update(state.completed_seq, at, t_max);
            window.push(RoundDurations {
                round,
                t_max_us: t_max,
                t_min_us: t_min,
            });
        }

        let theta = if config.adaptive_theta && state.ratio_history.len() >= 30 {
            estimate_theta(&state.ratio_history).unwrap_or(config.theta_slow)
        } else {
            config.theta_slow
        };
        if let Ok(Some(det)) =
            detect_slow(&window, &state.baseline, &mut state.counter, theta, config)
        {
            if det.alert && !state.slow_latched {
                let view = &state.rounds[&det.round];
                let ctx = SlowContext {
                    comm: comm_id,
                    round: det.round,
                    ranks: view
                        .per_rank
                        .iter()
                        .map(|(&rank, v)| SlowRankState {
                            rank,
                            duration_us: v.duration_us,
                            min_rate: v.min_rate,
                            total_count: v.total_count,
                        })
                        .collect(),
                    t_base_us: state.baseline.value_us(),
                    t_max_us: det.t_max_us,
                    t_min_us: det.t_min_us,
                    ratio: det.ratio,
                    baseline_configured: state.baseline.source() == BaselineSource::Configured,
                    detected_at_us: now_us,
                };
                match locate_slow(&ctx, config) {
                    Ok(report) => {
                        state.slow_latched = true;
                        reports.push(report);
                    }
                    Err(_) => {
                        // Location starved of evidence; leave the latch
                        // open so the next window retries.
                    }
                }
            } else if det.ratio <= theta {
                state.slow_latched = false;
                state.ratio_history.push(det.ratio);
            }
        }
        for round in consumed {
            state.rounds.remove(&round);
        }

        // Hang check over rounds still in flight.
        let mut views = Vec::new();
        for (&round, view) in &state.rounds {
            for (&rank, v) in &view.per_rank {
                if v.complete_us.is_none() {
                    views.push(InFlightView {
                        rank,
                        round,
                        trace_id: crate::trace::make_trace_id(comm_id, round, 0),
                        descriptor: v.descriptor,
                        enter_us: v.enter_us,
                    });
                }
            }
        }
        if let Some(alert) = detect_hang(&views, now_us, config) {
            if !state.hang_reported.contains(&alert.round) {
                let view = &state.rounds[&alert.round];
                let ranks: Vec<HangRankState> = state
                    .record
                    .members
                    .iter()
                    .map(|&rank| {
                        let v = view.per_rank.get(&rank);
                        HangRankState {
                            rank,
                            latest_round: state.rank_latest_round.get(&rank).copied(),
                            completed: v.is_some_and(|v| v.complete_us.is_some()),
                            descriptor: v.map(|v| v.descriptor),
                            total_count: v.map_or(0, |v| v.total_count),
                            duration_us: v.map(|v| {
                                v.complete_us
                                    .map_or(now_us.saturating_sub(v.enter_us), |c| {
                                        c - v.enter_us
                                    })
                            }),
                            min_rate: v.and_then(|v| v.min_rate),
                        }
                    })
                    .collect();
                let ctx = HangContext {
                    comm: comm_id,
                    round: alert.round,
                    groups: state.groups.clone(),
                    ranks,
                    detected_at_us: now_us,
                };
                if let Ok(report) = locate_hang(&ctx) {
                    state.hang_reported.insert(alert.round);
                    reports.push(report);
                }
            }
        }
        reports
    }
}

/// When a record becomes visible to evaluation ticks. The collector keeps
/// only the freshest heartbeat per round, so a heartbeat stands for "this
/// round has been in flight since its enter time" and streams at that
/// instant; completions stream when they were emitted.
fn stream_time(record: &Record) -> u64 {
    match record {
        Record::Comm(_) => 0,
        Record::Snapshot(s) => match s.snapshot.reason {
            SnapshotReason::Completion => s.emitted_at_us,
            SnapshotReason::Heartbeat => s.snapshot.enter_time_us,
        },
    }
}

/// Runs the full pipeline over a recorded stream: records are replayed in
/// visibility order, evaluation ticks fire at every detection-window
/// boundary through the stream's last emission, and trailing state is
/// flushed by one final boundary. Identical streams produce identical
/// report streams.
pub fn diagnose(records: &[Record], config: &AnalyzerConfig) -> Result<Vec<AnomalyReport>> {
    config.validate()?;
    let mut analyzer = Analyzer::new(*config)?;
    let mut ordered: Vec<&Record> = records.iter().collect();
    ordered.sort_by_key(|r| stream_time(r));
    let window = config.slow_window_us;
    let mut next_tick = window;
    let mut reports = Vec::new();
    let last_emitted = records.iter().filter_map(|r| r.emitted_at_us()).max();
    for record in ordered {
        if !matches!(record, Record::Comm(_)) {
            let at = stream_time(record);
            while at > next_tick {
                reports.extend(analyzer.tick(next_tick));
                next_tick += window;
            }
        }
        analyzer.ingest(record);
    }
    if let Some(last) = last_emitted {
        // The stream stayed alive through `last`; evaluate every remaining
        // boundary up to and one past it.
        while next_tick <= last + window {
            reports.extend(analyzer.tick(next_tick));
            next_tick += window;
        }
    }
    Ok(reports)
}
