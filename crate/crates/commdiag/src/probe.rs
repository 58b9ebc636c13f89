//! Per-rank sampling: progress rates from counter changes, and snapshot
//! emission for completed and in-flight rounds.
//!
//! A rate is the reciprocal of the number of counter-value *changes* seen
//! across fixed-interval samples. A fast transfer bundles many increments
//! into few sampling intervals (few changes, high rate); a degraded one
//! spreads the same increments across many intervals (many changes, low
//! rate). Zero changes over a window is the stalled sentinel, rate 0, which
//! sorts below every genuine rate.
//!
//! Two equivalent implementations exist. [`RateAccumulator`] and
//! [`FrameSampler`] sample a live frame at the configured cadence.
//! [`CounterLog`] reconstructs the identical counts from increment
//! timestamps, which lets the scenario pipeline evaluate rates at arbitrary
//! instants without scheduling one event per sample tick. Their agreement
//! is property-tested.

use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::trace::{
    CommunicatorId, MetricSnapshot, OperationDescriptor, ProbingFrame, RankId, Rate,
    SnapshotReason, TraceId, NUM_BLOCKS,
};

/// Sampler cadence and window configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeConfig {
    /// Counter sampling cadence in simulated microseconds.
    pub sample_interval_us: u64,
    /// Cadence of heartbeat snapshots for in-flight rounds.
    pub heartbeat_interval_us: u64,
    /// Sliding window length, in samples, over which changes are counted.
    pub rate_window_samples: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            sample_interval_us: 1_000,
            heartbeat_interval_us: 1_000_000,
            rate_window_samples: 1_000,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_interval_us == 0 || self.heartbeat_interval_us == 0 {
            return Err(Error::InvalidConfiguration(
                "probe intervals must be positive".into(),
            ));
        }
        if self.rate_window_samples == 0 {
            return Err(Error::InvalidConfiguration(
                "rate_window_samples must be positive".into(),
            ));
        }
        if self.sample_interval_us > self.heartbeat_interval_us {
            return Err(Error::InvalidConfiguration(
                "sample_interval_us must not exceed heartbeat_interval_us".into(),
            ));
        }
        Ok(())
    }

    /// Applies a `key=value` override, as accepted on the command line.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidConfiguration(format!("invalid {key} '{value}'"));
        match key {
            "sample_interval_us" => self.sample_interval_us = value.parse().map_err(|_| bad())?,
            "heartbeat_interval_us" => {
                self.heartbeat_interval_us = value.parse().map_err(|_| bad())?
            }
            "rate_window_samples" => {
                self.rate_window_samples = value.parse().map_err(|_| bad())?
            }
            other => {
                return Err(Error::InvalidConfiguration(format!(
                    "unknown probe config key '{other}'"
                )))
            }
        }
        self.validate()
    }
}

// ---------------------------------------------------------------------------
// Eager sampling
// ---------------------------------------------------------------------------

/// Change counter over a sliding window of the most recent samples.
#[derive(Debug, Clone)]
pub struct RateAccumulator {
    window: VecDeque<bool>,
    cap: usize,
    last_value: u64,
    change_count: u64,
}

impl RateAccumulator {
    pub fn new(window_samples: u64) -> Self {
        RateAccumulator {
            window: VecDeque::with_capacity(window_samples as usize),
            cap: window_samples.max(1) as usize,
            last_value: 0,
            change_count: 0,
        }
    }

    /// Feeds one sampled counter value. Counts a change iff the value
    /// differs from the previous sample.
    pub fn sample(&mut self, value: u64) {
        if self.window.len() == self.cap && self.window.pop_front() == Some(true) {
            self.change_count -= 1;
        }
        let changed = value != self.last_value;
        self.window.push_back(changed);
        if changed {
            self.change_count += 1;
            self.last_value = value;
        }
    }

    pub fn change_count(&self) -> u64 {
        self.change_count
    }

    pub fn window_samples(&self) -> u64 {
        self.window.len() as u64
    }

    /// `1 / change_count`, or the stalled sentinel 0 when no change was
    /// observed in the window. Errors when no sample has been taken yet.
    pub fn current_rate(&self) -> Result<Rate> {
        if self.window.is_empty() {
            return Err(Error::InsufficientData("rate window is empty".into()));
        }
        if self.change_count == 0 {
            Ok(Rate::zero())
        } else {
            Ok(Ratio::new(1, self.change_count))
        }
    }
}

/// Samples the most recently begun block of one rank's frame, one
/// accumulator pair per active channel.
pub struct FrameSampler {
    window_samples: u64,
    tracked_round: Option<u64>,
    send: Vec<RateAccumulator>,
    recv: Vec<RateAccumulator>,
}

impl FrameSampler {
    pub fn new(config: &ProbeConfig) -> Self {
        FrameSampler {
            window_samples: config.rate_window_samples,
            tracked_round: None,
            send: Vec::new(),
            recv: Vec::new(),
        }
    }

    /// Reads the active block and feeds every channel counter into its
    /// accumulator. Accumulators restart when the frame moves on to a new
    /// round.
    pub fn sample(&mut self, frame: &ProbingFrame, _now_us: u64) {
        let counter = frame.op_counter();
        if counter == 0 {
            return; // no round begun yet
        }
        let round = counter - 1;
        let channels = frame.num_channels() as usize;
        if self.tracked_round != Some(round) {
            self.tracked_round = Some(round);
            self.send = (0..channels)
                .map(|_| RateAccumulator::new(self.window_samples))
                .collect();
            self.recv = (0..channels)
                .map(|_| RateAccumulator::new(self.window_samples))
                .collect();
        }
        let block = (round % NUM_BLOCKS as u64) as usize;
        let snap = frame.read_block(block);
        for c in 0..channels {
            self.send[c].sample(snap.counts[c].0);
            self.recv[c].sample(snap.counts[c].1);
        }
    }

    pub fn tracked_round(&self) -> Option<u64> {
        self.tracked_round
    }

    /// Minimum over channels of the send-side rate.
    pub fn send_rate(&self) -> Result<Rate> {
        min_rate(&self.send)
    }

    /// Minimum over channels of the recv-side rate.
    pub fn recv_rate(&self) -> Result<Rate> {
        min_rate(&self.recv)
    }
}

fn min_rate(accs: &[RateAccumulator]) -> Result<Rate> {
    let mut best: Option<Rate> = None;
    for acc in accs {
        let r = acc.current_rate()?;
        best = Some(match best {
            Some(b) => b.min(r),
            None => r,
        });
    }
    best.ok_or_else(|| Error::InsufficientData("no channels tracked".into()))
}

// ---------------------------------------------------------------------------
// Lazy reconstruction
// ---------------------------------------------------------------------------

/// Timestamped increment log for one directional counter of one channel.
///
/// Reconstructs exactly what an eager sampler on the global grid
/// (ticks at multiples of the sample interval) would have accumulated.
#[derive(Debug, Clone, Default)]
pub struct CounterLog {
    increments: Vec<u64>,
}

impl CounterLog {
    pub fn push(&mut self, at_us: u64) {
        debug_assert!(self.increments.last().is_none_or(|&t| t <= at_us));
        self.increments.push(at_us);
    }

    /// Counter value at `at_us` (number of increments at or before it).
    pub fn count_at(&self, at_us: u64) -> u64 {
        self.increments.partition_point(|&t| t <= at_us) as u64
    }

    /// `(window_samples, change_count)` an eager sampler would report at
    /// `query_us` for a counter tracked since `start_us`.
    ///
    /// Ticks lie at multiples of `interval_us`; only ticks strictly after
    /// `start_us` sample this counter, and the window holds the most recent
    /// `window_samples` of them. An increment is seen at the first tick at
    /// or after it.
    pub fn windowed(
        &self,
        start_us: u64,
        interval_us: u64,
        window_samples: u64,
        query_us: u64,
    ) -> (u64, u64) {
        debug_assert!(interval_us > 0);
        let last_tick = query_us / interval_us; // index of newest tick <= query
        let first_excluded = start_us / interval_us; // ticks <= start excluded
        if last_tick <= first_excluded {
            return (0, 0);
        }
        let total_ticks = last_tick - first_excluded;
        let samples = total_ticks.min(window_samples);
        // Window covers tick indices in (window_floor, last_tick].
        let window_floor = last_tick - samples;
        let mut changes = 0u64;
        let mut prev_tick = None;
        for &t in &self.increments {
            let tick = t.div_ceil(interval_us);
            if tick <= window_floor || tick > last_tick {
                continue;
            }
            if prev_tick != Some(tick) {
                changes += 1;
                prev_tick = Some(tick);
            }
        }
        (samples, changes)
    }

    pub fn rate_at(
        &self,
        start_us: u64,
        interval_us: u64,
        window_samples: u64,
        query_us: u64,
    ) -> Option<Rate> {
        let (samples, changes) = self.windowed(start_us, interval_us, window_samples, query_us);
        if samples == 0 {
            None
        } else if changes == 0 {
            Some(Rate::zero())
        } else {
            Some(Ratio::new(1, changes))
        }
    }
}

// ---------------------------------------------------------------------------
// Probe: posting records and snapshot emission
// ---------------------------------------------------------------------------

/// Execution record of one posted round on one rank, accumulated by the
/// probe from simulator notifications.
#[derive(Debug, Clone)]
pub struct PostedRound {
    pub trace_id: TraceId,
    pub descriptor: OperationDescriptor,
    pub posted_at_us: u64,
    pub enter_us: Option<u64>,
    pub complete_us: Option<u64>,
    /// `(send, recv)` increment logs per active channel.
    pub logs: Vec<(CounterLog, CounterLog)>,
    next_heartbeat_us: Option<u64>,
}

/// One rank's probe: tracks posted rounds per communicator and turns them
/// into [`MetricSnapshot`]s; owns no shared mutable state.
pub struct Probe {
    config: ProbeConfig,
    rank: RankId,
    comms: BTreeMap<CommunicatorId, BTreeMap<u64, PostedRound>>,
}

impl Probe {
    pub fn new(rank: RankId, config: ProbeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Probe {
            config,
            rank,
            comms: BTreeMap::new(),
        })
    }

    pub fn rank(&self) -> RankId {
        self.rank
    }

    pub fn config(&self) -> &ProbeConfig {
        &self.config
    }

    pub fn on_post(
        &mut self,
        trace_id: TraceId,
        descriptor: OperationDescriptor,
        channels: usize,
        now_us: u64,
    ) {
        let rounds = self.comms.entry(trace_id.comm_id).or_default();
        rounds.insert(
            trace_id.op_counter as u64,
            PostedRound {
                trace_id,
                descriptor,
                posted_at_us: now_us,
                enter_us: None,
                complete_us: None,
                logs: vec![Default::default(); channels],
                next_heartbeat_us: None,
            },
        );
    }

    pub fn on_enter(&mut self, comm: CommunicatorId, round: u64, now_us: u64) {
        let heartbeat = self.config.heartbeat_interval_us;
        if let Some(rec) = self.round_mut(comm, round) {
            rec.enter_us = Some(now_us);
            rec.next_heartbeat_us = Some(now_us + heartbeat);
        }
    }

    pub fn on_record(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        channel: usize,
        send: bool,
        now_us: u64,
    ) {
        if let Some(rec) = self.round_mut(comm, round) {
            if let Some((s, r)) = rec.logs.get_mut(channel) {
                if send {
                    s.push(now_us);
                } else {
                    r.push(now_us);
                }
            }
        }
    }

    pub fn on_complete(&mut self, comm: CommunicatorId, round: u64, now_us: u64) {
        if let Some(rec) = self.round_mut(comm, round) {
            rec.complete_us = Some(now_us);
        }
    }

    fn round_mut(&mut self, comm: CommunicatorId, round: u64) -> Option<&mut PostedRound> {
        self.comms.get_mut(&comm).and_then(|r| r.get_mut(&round))
    }

    pub fn round(&self, comm: CommunicatorId, round: u64) -> Option<&PostedRound> {
        self.comms.get(&comm).and_then(|r| r.get(&round))
    }

    /// Heartbeat instants due up to `now_us` across all entered rounds, in
    /// time order. A round heartbeats while it was in flight at the
    /// instant, even if, by drain time, a later event already completed
    /// it; drained instants are not revisited.
    pub fn drain_heartbeats(&mut self, now_us: u64) -> Vec<(CommunicatorId, u64, u64)> {
        let mut due = Vec::new();
        for (comm, rounds) in &mut self.comms {
            for (round, rec) in rounds.iter_mut() {
                while let Some(at) = rec.next_heartbeat_us {
                    if rec.complete_us.is_some_and(|c| at >= c) {
                        rec.next_heartbeat_us = None;
                        break;
                    }
                    if at > now_us {
                        break;
                    }
                    due.push((*comm, *round, at));
                    rec.next_heartbeat_us = Some(at + self.config.heartbeat_interval_us);
                }
            }
        }
        due.sort_unstable_by_key(|&(c, r, t)| (t, c, r));
        due
    }

    /// Builds the snapshot of one round as of `at_us`.
    ///
    /// Counts are reconstructed point-in-time; rates cover the trailing
    /// sample window and are absent until at least one sample tick has
    /// elapsed since entry. Completion snapshots carry the completion time;
    /// heartbeats mark the round in flight.
    pub fn emit_snapshot(
        &self,
        comm: CommunicatorId,
        round: u64,
        at_us: u64,
        reason: SnapshotReason,
    ) -> Result<MetricSnapshot> {
        let rec = self
            .round(comm, round)
            .ok_or_else(|| Error::NoRound(format!("comm {comm} round {round}")))?;
        let enter_us = rec
            .enter_us
            .ok_or_else(|| Error::NoRound(format!("comm {comm} round {round} never entered")))?;
        let per_channel_counts: Vec<(u64, u64)> = rec
            .logs
            .iter()
            .map(|(s, r)| (s.count_at(at_us), r.count_at(at_us)))
            .collect();
        let (send_rate, recv_rate) = self.rates_at(rec, enter_us, at_us);
        let complete_time_us = match reason {
            SnapshotReason::Completion => Some(rec.complete_us.ok_or_else(|| {
                Error::NoRound(format!("comm {comm} round {round} not complete"))
            })?),
            SnapshotReason::Heartbeat => None,
        };
        let duration_us = complete_time_us.unwrap_or(at_us).saturating_sub(enter_us);
        Ok(MetricSnapshot {
            rank: self.rank,
            trace_id: rec.trace_id,
            descriptor: rec.descriptor,
            reason,
            per_channel_counts,
            send_rate,
            recv_rate,
            enter_time_us: enter_us,
            complete_time_us,
            duration_us,
        })
    }

    fn rates_at(
        &self,
        rec: &PostedRound,
        enter_us: u64,
        at_us: u64,
    ) -> (Option<Rate>, Option<Rate>) {
        let interval = self.config.sample_interval_us;
        let cap = self.config.rate_window_samples;
        let mut send: Option<Rate> = None;
        let mut recv: Option<Rate> = None;
        for (s, r) in &rec.logs {
            match (send, s.rate_at(enter_us, interval, cap, at_us)) {
                (prev, Some(rate)) => send = Some(prev.map_or(rate, |p| p.min(rate))),
                (_, None) => return (None, None), // no tick elapsed yet
            }
            match (recv, r.rate_at(enter_us, interval, cap, at_us)) {
                (prev, Some(rate)) => recv = Some(prev.map_or(rate, |p| p.min(rate))),
                (_, None) => return (None, None),
            }
        }
        (send, recv)
    }

    /// Drops every record associated with `comm`. Idempotent: releasing an
    /// unknown communicator is a no-op, since teardown may race with
    /// destruction.
    pub fn release(&mut self, comm: CommunicatorId) {
        self.comms.remove(&comm);
    }

    /// Number of communicators currently tracked.
    pub fn tracked_comms(&self) -> usize {
        self.comms.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{make_trace_id, Algorithm, OpKind, Protocol};

    fn acc(cap: u64) -> RateAccumulator {
        RateAccumulator::new(cap)
    }

    #[test]
    fn constant_counter_adds_no_changes() {
        let mut a = acc(1000);
        for _ in 0..5 {
            a.sample(42);
        }
        // First sample counts the 0 -> 42 jump; the rest are constant.
        assert_eq!(a.change_count(), 1);
        let mut b = acc(1000);
        for _ in 0..5 {
            b.sample(0);
        }
        assert_eq!(b.change_count(), 0);
    }

    #[test]
    fn burst_counter_counts_two_changes() {
        // Counter goes 0 -> 4 -> 4 -> 8 over three sampling intervals:
        // eight operations complete with two value changes.
        let mut a = acc(1000);
        for v in [4, 4, 8] {
            a.sample(v);
        }
        assert_eq!(a.window_samples(), 3);
        assert_eq!(a.change_count(), 2);
        assert_eq!(a.current_rate().unwrap(), Ratio::new(1, 2));
    }

    #[test]
    fn steady_counter_counts_every_sample() {
        let mut a = acc(1000);
        for v in 1..=7 {
            a.sample(v);
        }
        assert_eq!(a.change_count(), 7);
        assert_eq!(a.current_rate().unwrap(), Ratio::new(1, 7));
    }

    #[test]
    fn zero_changes_reports_stalled_sentinel() {
        let mut a = acc(4);
        for _ in 0..4 {
            a.sample(0);
        }
        assert_eq!(a.current_rate().unwrap(), Rate::zero());
    }

    #[test]
    fn empty_window_is_insufficient_data() {
        let a = acc(10);
        assert!(matches!(
            a.current_rate(),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn window_slides_out_old_changes() {
        let mut a = acc(3);
        a.sample(1); // change
        a.sample(1);
        a.sample(1);
        assert_eq!(a.change_count(), 1);
        a.sample(1); // the original change slides out
        assert_eq!(a.change_count(), 0);
        assert_eq!(a.window_samples(), 3);
        assert_eq!(a.current_rate().unwrap(), Rate::zero());
    }

    #[test]
    fn rate_is_one_only_for_single_change_window() {
        let mut a = acc(1);
        a.sample(5);
        assert_eq!(a.current_rate().unwrap(), Ratio::new(1, 1));
    }

    #[test]
    fn frame_sampler_tracks_active_block() {
        let frame = ProbingFrame::new(2, true).unwrap();
        let cfg = ProbeConfig::default();
        let mut sampler = FrameSampler::new(&cfg);
        sampler.sample(&frame, 0);
        assert_eq!(sampler.tracked_round(), None);

        let h = frame
            .begin_round(make_trace_id(CommunicatorId(1), 0, 0))
            .unwrap();
        sampler.sample(&frame, 1_000);
        assert_eq!(sampler.tracked_round(), Some(0));
        frame.record(h, 0, crate::trace::Direction::Send, 4).unwrap();
        sampler.sample(&frame, 2_000);
        sampler.sample(&frame, 3_000);
        frame.record(h, 0, crate::trace::Direction::Send, 4).unwrap();
        sampler.sample(&frame, 4_000);
        // Channel 0 saw changes at two ticks; channel 1 never changed, so
        // the min over channels is the stalled sentinel.
        assert_eq!(sampler.send[0].change_count(), 2);
        assert_eq!(sampler.send_rate().unwrap(), Rate::zero());
    }

    #[test]
    fn counter_log_matches_eager_sampler() {
        // The lazy reconstruction and an eager sampler fed from the same
        // increments must agree at every tick.
        use proptest::prelude::*;

        proptest!(|(
            raw_gaps in proptest::collection::vec(1u64..5_000, 0..60),
            start in 0u64..10_000,
            interval in 1u64..2_000,
            cap in 1u64..40,
        )| {
            let mut log = CounterLog::default();
            let mut t = start;
            for gap in &raw_gaps {
                t += gap;
                log.push(t);
            }
            let end = t + 3 * interval;

            // Eager: sample at every grid tick after start.
            let mut acc = RateAccumulator::new(cap);
            let first_tick = start / interval + 1;
            let mut value;
            for n in first_tick..=(end / interval) {
                let tick_time = n * interval;
                value = log.count_at(tick_time);
                acc.sample(value);
                let (samples, changes) = log.windowed(start, interval, cap, tick_time);
                prop_assert_eq!(samples, acc.window_samples());
                prop_assert_eq!(changes, acc.change_count());
                // Querying between ticks must agree with the last tick.
                let (s2, c2) = log.windowed(start, interval, cap, tick_time + interval - 1);
                prop_assert_eq!((s2, c2), (samples, changes));
            }
        });
    }

    fn descriptor() -> OperationDescriptor {
        OperationDescriptor::new(OpKind::AllReduce, Algorithm::Ring, Protocol::Simple, 1024)
            .unwrap()
    }

    fn posted_probe() -> Probe {
        let mut p = Probe::new(RankId(3), ProbeConfig::default()).unwrap();
        let tid = make_trace_id(CommunicatorId(9), 0, 0);
        p.on_post(tid, descriptor(), 2, 100);
        p.on_enter(CommunicatorId(9), 0, 150);
        p
    }

    #[test]
    fn snapshot_of_completed_round_carries_duration_and_counts() {
        let mut p = posted_probe();
        let comm = CommunicatorId(9);
        for t in [500, 1_500, 2_500, 3_500] {
            p.on_record(comm, 0, 0, true, t);
            p.on_record(comm, 0, 0, false, t + 10);
            p.on_record(comm, 0, 1, true, t);
            p.on_record(comm, 0, 1, false, t + 10);
        }
        p.on_complete(comm, 0, 3_600);
        let snap = p
            .emit_snapshot(comm, 0, 3_600, SnapshotReason::Completion)
            .unwrap();
        assert_eq!(snap.complete_time_us, Some(3_600));
        assert_eq!(snap.duration_us, 3_450);
        assert_eq!(snap.per_channel_counts, vec![(4, 4), (4, 4)]);
        assert!(snap.send_rate.unwrap() > Rate::zero());
    }

    #[test]
    fn heartbeat_during_stall_reports_frozen_counts_and_zero_rate() {
        let mut p = posted_probe();
        let comm = CommunicatorId(9);
        p.on_record(comm, 0, 0, true, 200);
        p.on_record(comm, 0, 1, true, 210);
        // Stalled long past a full window: rates hit the sentinel.
        let snap = p
            .emit_snapshot(comm, 0, 5_000_000, SnapshotReason::Heartbeat)
            .unwrap();
        assert_eq!(snap.complete_time_us, None);
        assert_eq!(snap.per_channel_counts, vec![(1, 0), (1, 0)]);
        assert_eq!(snap.send_rate, Some(Rate::zero()));
        assert_eq!(snap.recv_rate, Some(Rate::zero()));
        assert_eq!(snap.duration_us, 5_000_000 - 150);
    }

    #[test]
    fn barrier_descriptor_rides_through_snapshot() {
        let mut p = Probe::new(RankId(0), ProbeConfig::default()).unwrap();
        let comm = CommunicatorId(2);
        let tid = make_trace_id(comm, 0, 0);
        let barrier =
            OperationDescriptor::new(OpKind::AllReduce, Algorithm::Ring, Protocol::LL, 4).unwrap();
        p.on_post(tid, barrier, 1, 0);
        p.on_enter(comm, 0, 0);
        p.on_complete(comm, 0, 50);
        let snap = p
            .emit_snapshot(comm, 0, 50, SnapshotReason::Completion)
            .unwrap();
        assert_eq!(snap.descriptor.data_size_bytes, 4);
        assert_eq!(snap.descriptor.op_name, OpKind::AllReduce);
    }

    #[test]
    fn release_then_snapshot_is_no_round_and_release_is_idempotent() {
        let mut p = posted_probe();
        let comm = CommunicatorId(9);
        p.release(comm);
        assert!(matches!(
            p.emit_snapshot(comm, 0, 1_000, SnapshotReason::Heartbeat),
            Err(Error::NoRound(_))
        ));
        p.release(comm); // second release: no-op
        assert_eq!(p.tracked_comms(), 0);
    }

    #[test]
    fn create_release_cycles_leave_no_residue() {
        let mut p = Probe::new(RankId(0), ProbeConfig::default()).unwrap();
        for i in 0..1_000u64 {
            let comm = CommunicatorId(i);
            p.on_post(make_trace_id(comm, 0, 0), descriptor(), 4, i);
            p.on_enter(comm, 0, i);
            p.release(comm);
        }
        assert_eq!(p.tracked_comms(), 0);
    }

    #[test]
    fn heartbeats_fire_once_per_interval_while_in_flight() {
        let mut p = posted_probe();
        // Entered at 150 with a 1 s interval.
        let due = p.drain_heartbeats(3_200_000);
        let times: Vec<u64> = due.iter().map(|&(_, _, t)| t).collect();
        assert_eq!(times, vec![1_000_150, 2_000_150, 3_000_150]);
        // Draining again yields nothing new before the next interval.
        assert!(p.drain_heartbeats(3_900_000).is_empty());
        p.on_complete(CommunicatorId(9), 0, 3_950_000);
        assert!(p.drain_heartbeats(10_000_000).is_empty());
    }

    #[test]
    fn snapshot_before_any_tick_has_no_rate() {
        let mut p = posted_probe();
        let comm = CommunicatorId(9);
        p.on_record(comm, 0, 0, true, 200);
        let snap = p
            .emit_snapshot(comm, 0, 300, SnapshotReason::Heartbeat)
            .unwrap();
        assert_eq!(snap.send_rate, None);
        assert_eq!(snap.recv_rate, None);
    }
}
