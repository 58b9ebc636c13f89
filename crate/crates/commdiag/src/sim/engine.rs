//! Discrete-event execution of collective rounds.
//!
//! Each posted round becomes per-rank channel lanes of send/recv units.
//! A lane services one send unit at a time; the unit's service time is
//! `line_bytes / effective_bandwidth`, and its matched receive lands at the
//! peer one latency hop later. A step's sends open only after the previous
//! step's receives have fully arrived, so a rank that stops producing
//! starves its dependents — which is exactly the propagation behavior the
//! analyzer has to see through.
//!
//! The event loop is single-threaded and deterministic: events process in
//! `(time, rank, channel, sequence)` order, and the only randomness is the
//! seeded per-(round, rank) entry jitter. Identical configuration, script,
//! and seed replay identical traces byte for byte.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::comm::Communicator;
use crate::sim::config::ClusterConfig;
use crate::sim::fault::{FaultKind, FaultSpec};
use crate::sim::plan::{decompose_op, StepPlan};
use crate::trace::{
    make_trace_id, Algorithm, BlockHandle, CommunicatorId, Direction, OpKind,
    OperationDescriptor, ProbingFrame, RankId, TraceId,
};

/// Simulated time in microseconds. Monotone; advances only through event
/// processing, so long thresholds elapse in wall-clock milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct SimClock {
    pub now_us: u64,
}

/// Simulator-to-probe notification surface. The scenario pipeline wires
/// these into per-rank probes; tests may record or ignore them.
pub trait SimHooks {
    fn on_post(
        &mut self,
        _rank: RankId,
        _trace_id: TraceId,
        _descriptor: OperationDescriptor,
        _channels: usize,
        _now_us: u64,
    ) {
    }
    fn on_enter(&mut self, _rank: RankId, _comm: CommunicatorId, _round: u64, _now_us: u64) {}
    fn on_record(
        &mut self,
        _rank: RankId,
        _comm: CommunicatorId,
        _round: u64,
        _channel: usize,
        _send: bool,
        _now_us: u64,
    ) {
    }
    fn on_complete(&mut self, _rank: RankId, _comm: CommunicatorId, _round: u64, _now_us: u64) {}
}

/// Hooks that ignore every notification.
pub struct NoopHooks;

impl SimHooks for NoopHooks {}

/// One rank finishing its plan for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundCompletion {
    pub rank: RankId,
    pub comm: CommunicatorId,
    pub round: u64,
    pub at_us: u64,
}

/// One line of the ordered event trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time_us: u64,
    pub rank: u32,
    pub channel: u32,
    pub kind: TraceEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEventKind {
    Post {
        comm: CommunicatorId,
        round: u64,
        descriptor: OperationDescriptor,
    },
    Suppressed {
        comm: CommunicatorId,
        round: u64,
    },
    Enter {
        comm: CommunicatorId,
        round: u64,
    },
    SendUnit {
        comm: CommunicatorId,
        round: u64,
        step: usize,
        to: RankId,
    },
    RecvUnit {
        comm: CommunicatorId,
        round: u64,
        step: usize,
        from: RankId,
    },
    Freeze {
        comm: CommunicatorId,
        round: u64,
    },
    Complete {
        comm: CommunicatorId,
        round: u64,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} ", self.time_us, self.rank, self.channel)?;
        match &self.kind {
            TraceEventKind::Post {
                comm,
                round,
                descriptor,
            } => write!(
                f,
                "post comm={comm} round={round} op={} algo={} proto={} bytes={}",
                descriptor.op_name,
                descriptor.algorithm,
                descriptor.protocol,
                descriptor.data_size_bytes
            ),
            TraceEventKind::Suppressed { comm, round } => {
                write!(f, "suppressed comm={comm} round={round}")
            }
            TraceEventKind::Enter { comm, round } => write!(f, "enter comm={comm} round={round}"),
            TraceEventKind::SendUnit {
                comm,
                round,
                step,
                to,
            } => write!(f, "send_unit comm={comm} round={round} step={step} to={to}"),
            TraceEventKind::RecvUnit {
                comm,
                round,
                step,
                from,
            } => write!(
                f,
                "recv_unit comm={comm} round={round} step={step} from={from}"
            ),
            TraceEventKind::Freeze { comm, round } => {
                write!(f, "freeze comm={comm} round={round}")
            }
            TraceEventKind::Complete { comm, round } => {
                write!(f, "complete comm={comm} round={round}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Event queue
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum EventKind {
    Enter {
        comm: CommunicatorId,
        round: u64,
    },
    SendDone {
        comm: CommunicatorId,
        round: u64,
    },
    Arrive {
        comm: CommunicatorId,
        round: u64,
        from: RankId,
    },
    PseudoArrive {
        comm: CommunicatorId,
        round: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct QueuedEvent {
    time: u64,
    rank: u32,
    channel: u32,
    seq: u64,
    kind: EventKind,
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.rank, self.channel, self.seq).cmp(&(
            other.time,
            other.rank,
            other.channel,
            other.seq,
        ))
    }
}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

// ---------------------------------------------------------------------------
// Per-round runtime state
// ---------------------------------------------------------------------------

struct Lane {
    steps: Vec<StepPlan>,
    send_step: usize,
    send_entry: usize,
    sent_in_entry: u64,
    busy: bool,
    in_service_to: RankId,
    in_service_step: usize,
    /// Units arrived from the wire per (step, recv entry), not yet
    /// consumed by the kernel.
    recv_arrived: Vec<Vec<u64>>,
    /// Units consumed per (step, recv entry).
    recv_consumed: Vec<Vec<u64>>,
    /// Expected units per (step, recv entry).
    recv_expected: Vec<Vec<u64>>,
    /// Leading steps whose receives are fully consumed; sends of step `s`
    /// need `recv_prefix_done >= s`.
    recv_prefix_done: usize,
}

impl Lane {
    fn new(steps: Vec<StepPlan>) -> Self {
        let recv_expected: Vec<Vec<u64>> = steps
            .iter()
            .map(|s| s.recvs.iter().map(|&(_, u)| u).collect())
            .collect();
        let zeros: Vec<Vec<u64>> = recv_expected
            .iter()
            .map(|v| vec![0; v.len()])
            .collect();
        let mut lane = Lane {
            steps,
            send_step: 0,
            send_entry: 0,
            sent_in_entry: 0,
            busy: false,
            in_service_to: RankId(0),
            in_service_step: 0,
            recv_arrived: zeros.clone(),
            recv_consumed: zeros,
            recv_expected,
            recv_prefix_done: 0,
        };
        lane.advance_prefix();
        lane
    }

    fn total_send_units(&self) -> u64 {
        self.steps
            .iter()
            .flat_map(|s| &s.sends)
            .map(|&(_, u)| u)
            .sum()
    }

    fn total_recv_units(&self) -> u64 {
        self.steps
            .iter()
            .flat_map(|s| &s.recvs)
            .map(|&(_, u)| u)
            .sum()
    }

    fn advance_prefix(&mut self) {
        while self.recv_prefix_done < self.recv_expected.len()
            && self.recv_consumed[self.recv_prefix_done] == self.recv_expected[self.recv_prefix_done]
        {
            self.recv_prefix_done += 1;
        }
    }

    /// The step the kernel is currently working, skipping fully sent
    /// steps; the lane consumes receives of steps up to this point.
    fn effective_send_step(&self) -> usize {
        let mut step = self.send_step;
        let mut entry = self.send_entry;
        let mut sent = self.sent_in_entry;
        loop {
            let Some(s) = self.steps.get(step) else {
                return self.steps.len();
            };
            match s.sends.get(entry) {
                None => {
                    step += 1;
                    entry = 0;
                    sent = 0;
                }
                Some(&(_, units)) if sent >= units => {
                    entry += 1;
                    sent = 0;
                }
                Some(_) => return step,
            }
        }
    }

    /// Next sendable unit's `(step, target)` if gating allows one now.
    fn next_send(&mut self) -> Option<(usize, RankId)> {
        if self.busy {
            return None;
        }
        loop {
            let step = self.steps.get(self.send_step)?;
            if self.send_entry >= step.sends.len() {
                self.send_step += 1;
                self.send_entry = 0;
                self.sent_in_entry = 0;
                continue;
            }
            // Sends of step s wait until every receive of steps < s has
            // been consumed.
            if self.recv_prefix_done < self.send_step {
                return None;
            }
            let (target, units) = step.sends[self.send_entry];
            if self.sent_in_entry >= units {
                self.send_entry += 1;
                self.sent_in_entry = 0;
                continue;
            }
            return Some((self.send_step, target));
        }
    }

    /// Marks the in-service unit as retired and advances the cursor.
    fn retire_send(&mut self) {
        self.sent_in_entry += 1;
        let step = &self.steps[self.send_step];
        if self.sent_in_entry >= step.sends[self.send_entry].1 {
            self.send_entry += 1;
            self.sent_in_entry = 0;
        }
    }

    /// Books one arrived unit from `from` against the earliest expectation
    /// still missing wire data. Returns `None` for unexpected traffic.
    fn book_arrival(&mut self, from: Option<RankId>) -> Option<usize> {
        for s in 0..self.steps.len() {
            for (e, &(peer, _)) in self.steps[s].recvs.iter().enumerate() {
                if self.recv_arrived[s][e] < self.recv_expected[s][e]
                    && from.is_none_or(|f| f == peer)
                {
                    self.recv_arrived[s][e] += 1;
                    return Some(s);
                }
            }
        }
        None
    }

    /// Consumes the next arrived-but-unconsumed unit the kernel has
    /// reached, earliest step first. Returns `(step, sender)`.
    fn consume_next(&mut self) -> Option<(usize, RankId)> {
        let reached = self.effective_send_step();
        for s in self.recv_prefix_done..self.steps.len() {
            if s > reached {
                break;
            }
            for (e, &(peer, _)) in self.steps[s].recvs.iter().enumerate() {
                if self.recv_consumed[s][e] < self.recv_arrived[s][e] {
                    self.recv_consumed[s][e] += 1;
                    self.advance_prefix();
                    return Some((s, peer));
                }
            }
        }
        None
    }
}

struct RankRound {
    descriptor: OperationDescriptor,
    handle: BlockHandle,
    entered: bool,
    enter_us: u64,
    complete: bool,
    lanes: Vec<Lane>,
    sends_remaining: u64,
    recvs_remaining: u64,
    bandwidth_factor: f64,
    inconsistent: bool,
    /// Send units left before a hardware fault kills the kernel.
    freeze_allowance: Option<u64>,
    /// Sent-but-unconsumed units per channel per peer; a full edge blocks
    /// further sends to that peer.
    edge_outstanding: Vec<BTreeMap<RankId, u64>>,
}

struct RoundState {
    ranks: BTreeMap<RankId, RankRound>,
}

struct RankExec {
    active: Option<(CommunicatorId, u64)>,
    queue: VecDeque<(CommunicatorId, u64, u64)>,
    /// Dead kernel: no instruction retires, nothing is counted.
    frozen: bool,
}

// ---------------------------------------------------------------------------
// Cluster
// ---------------------------------------------------------------------------

/// The simulated cluster: frames, communicators, fault table, event queue.
pub struct Cluster {
    config: ClusterConfig,
    frames: Vec<Arc<ProbingFrame>>,
    comms: BTreeMap<CommunicatorId, Communicator>,
    comm_next_round: BTreeMap<CommunicatorId, u64>,
    next_comm_id: u64,
    faults: Vec<FaultSpec>,
    clock: SimClock,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    next_seq: u64,
    rounds: BTreeMap<(CommunicatorId, u64), RoundState>,
    rank_exec: Vec<RankExec>,
    trace: Vec<TraceEvent>,
    /// Record per-unit trace events. Off for bulk runs where only
    /// lifecycle events matter.
    pub record_unit_events: bool,
}

impl Cluster {
    /// Builds the cluster: one probing frame per rank, empty event queue,
    /// clock at zero.
    pub fn build(config: ClusterConfig) -> Result<Self> {
        config.validate()?;
        let frames = (0..config.num_ranks)
            .map(|_| {
                ProbingFrame::new(
                    config.channels_per_rank as u64,
                    config.measurement_enabled,
                )
                .map(Arc::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let rank_exec = (0..config.num_ranks)
            .map(|_| RankExec {
                active: None,
                queue: VecDeque::new(),
                frozen: false,
            })
            .collect();
        Ok(Cluster {
            config,
            frames,
            comms: BTreeMap::new(),
            comm_next_round: BTreeMap::new(),
            next_comm_id: 1,
            faults: Vec::new(),
            clock: SimClock::default(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            rounds: BTreeMap::new(),
            rank_exec,
            trace: Vec::new(),
            record_unit_events: true,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now_us
    }

    pub fn frame(&self, rank: RankId) -> &Arc<ProbingFrame> {
        &self.frames[rank.0 as usize]
    }

    pub fn communicator(&self, id: CommunicatorId) -> Option<&Communicator> {
        self.comms.get(&id)
    }

    pub fn communicators(&self) -> impl Iterator<Item = &Communicator> {
        self.comms.values()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.trace)
    }

    /// Whether the rank's kernel died to a hardware fault.
    pub fn is_frozen(&self, rank: RankId) -> bool {
        self.rank_exec[rank.0 as usize].frozen
    }

    pub fn add_fault(&mut self, fault: FaultSpec) -> Result<()> {
        fault.validate()?;
        if fault.victim.0 >= self.config.num_ranks {
            return Err(Error::InvalidConfiguration(format!(
                "fault victim {} outside cluster of {} ranks",
                fault.victim, self.config.num_ranks
            )));
        }
        self.faults.push(fault);
        Ok(())
    }

    /// Registers a communicator with a fresh id.
    pub fn create_communicator(
        &mut self,
        members: Vec<RankId>,
        algorithm: Algorithm,
    ) -> Result<CommunicatorId> {
        let id = CommunicatorId(self.next_comm_id);
        self.next_comm_id += 1;
        self.create_communicator_with_id(id, members, algorithm)?;
        Ok(id)
    }

    /// Registers a communicator under a caller-chosen id (scenario scripts
    /// name their communicators explicitly).
    pub fn create_communicator_with_id(
        &mut self,
        id: CommunicatorId,
        members: Vec<RankId>,
        algorithm: Algorithm,
    ) -> Result<()> {
        if self.comms.contains_key(&id) {
            return Err(Error::InvalidConfiguration(format!(
                "communicator {id} already exists"
            )));
        }
        for &m in &members {
            if m.0 >= self.config.num_ranks {
                return Err(Error::InvalidConfiguration(format!(
                    "member {m} outside cluster of {} ranks",
                    self.config.num_ranks
                )));
            }
        }
        let comm = Communicator::new(id, members, algorithm)?;
        self.next_comm_id = self.next_comm_id.max(id.0 + 1);
        self.comms.insert(id, comm);
        self.comm_next_round.insert(id, 0);
        Ok(())
    }

    fn schedule(&mut self, time: u64, rank: RankId, channel: usize, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEvent {
            time,
            rank: rank.0,
            channel: channel as u32,
            seq,
            kind,
        }));
    }

    fn push_trace(&mut self, rank: RankId, channel: usize, kind: TraceEventKind) {
        self.trace.push(TraceEvent {
            time_us: self.clock.now_us,
            rank: rank.0,
            channel: channel as u32,
            kind,
        });
    }

    /// Deterministic entry jitter for `(comm, round, rank)`.
    fn entry_jitter(&self, comm: CommunicatorId, round: u64, rank: RankId) -> u64 {
        if self.config.entry_jitter_us == 0 {
            return 0;
        }
        let key = self
            .config
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(comm.0.wrapping_mul(0xff51_afd7_ed55_8ccd))
            .wrapping_add(round.wrapping_mul(0xc4ce_b9fe_1a85_ec53))
            .wrapping_add(rank.0 as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.gen_range(0..=self.config.entry_jitter_us)
    }

    fn fault_for(&self, kind: FaultKind, comm: CommunicatorId, round: u64, rank: RankId) -> Option<&FaultSpec> {
        self.faults
            .iter()
            .find(|f| f.kind == kind && f.applies(comm, round, rank))
    }

    fn service_us(&self, rank: RankId, channel: usize, descriptor: &OperationDescriptor, factor: f64) -> u64 {
        let bw = self.config.bandwidth(rank.0, channel as u32) * factor;
        let line = descriptor.protocol.unit_line_bytes() as f64;
        (line / bw).ceil().max(1.0) as u64
    }

    /// Posts one collective round onto every member rank.
    ///
    /// Ranks under a not-entered fault post nothing: their operation
    /// counter stays behind. An inconsistent-hang victim posts its
    /// substitute descriptor instead and will execute it self-contained.
    /// Entry is queued FIFO per rank at `now + entry delay`, where
    /// computation-slow faults add their extra delay.
    pub fn post_collective(
        &mut self,
        comm_id: CommunicatorId,
        descriptor: OperationDescriptor,
        round: u64,
        hooks: &mut dyn SimHooks,
    ) -> Result<()> {
        let comm = self
            .comms
            .get(&comm_id)
            .ok_or(Error::UnknownCommunicator(comm_id.0))?
            .clone();
        let expected = *self.comm_next_round.get(&comm_id).unwrap_or(&0);
        if round != expected {
            return Err(Error::TraceDesync {
                expected,
                got: round,
            });
        }
        let channels = self.config.channels_per_rank as usize;
        let plan = decompose_op(&descriptor, &comm, channels)?;
        // Substitute plan for an inconsistent victim, computed lazily.
        let mut state = RoundState {
            ranks: BTreeMap::new(),
        };
        let now = self.clock.now_us;
        for &rank in &comm.members {
            if self
                .fault_for(FaultKind::NotEnteredHang, comm_id, round, rank)
                .is_some()
            {
                self.push_trace(rank, 0, TraceEventKind::Suppressed { comm: comm_id, round });
                continue;
            }
            let mut rank_desc = descriptor;
            let mut rank_plan = plan.per_rank[&rank].clone();
            let mut inconsistent = false;
            if let Some(f) = self.fault_for(FaultKind::InconsistentHang, comm_id, round, rank) {
                let substitute = f
                    .substitute
                    .unwrap_or_else(|| default_substitute(&descriptor));
                let sub_plan = decompose_op(&substitute, &comm, channels)?;
                rank_desc = substitute;
                rank_plan = sub_plan.per_rank[&rank].clone();
                inconsistent = true;
            }
            let mut entry_delay = self.entry_jitter(comm_id, round, rank);
            let mut bandwidth_factor = 1.0;
            for kind in [FaultKind::CompSlow, FaultKind::MixedSlow] {
                if let Some(f) = self.fault_for(kind, comm_id, round, rank) {
                    entry_delay += f.entry_delay_us;
                }
            }
            for kind in [FaultKind::CommSlow, FaultKind::MixedSlow] {
                if let Some(f) = self.fault_for(kind, comm_id, round, rank) {
                    bandwidth_factor *= f.bandwidth_factor;
                }
            }
            let lanes: Vec<Lane> = rank_plan
                .channels
                .into_iter()
                .map(|c| Lane::new(c.steps))
                .collect();
            let edge_outstanding = vec![BTreeMap::new(); lanes.len()];
            let sends_remaining: u64 = lanes.iter().map(|l| l.total_send_units()).sum();
            let recvs_remaining: u64 = lanes.iter().map(|l| l.total_recv_units()).sum();
            let freeze_allowance = self
                .fault_for(FaultKind::HardwareFault, comm_id, round, rank)
                .map(|f| (f.freeze_after_fraction * sends_remaining as f64).floor() as u64);
            let trace_id = make_trace_id(comm_id, round, 0);
            let handle = self.frames[rank.0 as usize].begin_round(trace_id)?;
            hooks.on_post(rank, trace_id, rank_desc, channels, now);
            self.push_trace(
                rank,
                0,
                TraceEventKind::Post {
                    comm: comm_id,
                    round,
                    descriptor: rank_desc,
                },
            );
            state.ranks.insert(
                rank,
                RankRound {
                    descriptor: rank_desc,
                    handle,
                    entered: false,
                    enter_us: 0,
                    complete: false,
                    lanes,
                    sends_remaining,
                    recvs_remaining,
                    bandwidth_factor,
                    inconsistent,
                    freeze_allowance,
                    edge_outstanding,
                },
            );
            let exec = &mut self.rank_exec[rank.0 as usize];
            exec.queue.push_back((comm_id, round, now + entry_delay));
            if exec.active.is_none() && !exec.frozen {
                let (c, r, ready) = exec.queue.pop_front().unwrap();
                exec.active = Some((c, r));
                self.schedule(ready.max(now), rank, 0, EventKind::Enter { comm: c, round: r });
            }
        }
        self.rounds.insert((comm_id, round), state);
        self.comm_next_round.insert(comm_id, round + 1);
        Ok(())
    }

    /// Processes queued events up to and including `until_us`, advancing
    /// the clock. Returns the rank round completions that occurred, in
    /// processing order. Stalled rounds simply leave their events pending.
    pub fn advance(&mut self, until_us: u64, hooks: &mut dyn SimHooks) -> Vec<RoundCompletion> {
        let mut completions = Vec::new();
        while let Some(Reverse(ev)) = self.queue.peek() {
            if ev.time > until_us {
                break;
            }
            let Reverse(ev) = self.queue.pop().unwrap();
            debug_assert!(ev.time >= self.clock.now_us);
            self.clock.now_us = ev.time;
            self.process(ev, hooks, &mut completions);
        }
        self.clock.now_us = self.clock.now_us.max(until_us);
        completions
    }

    fn process(
        &mut self,
        ev: QueuedEvent,
        hooks: &mut dyn SimHooks,
        completions: &mut Vec<RoundCompletion>,
    ) {
        let rank = RankId(ev.rank);
        match ev.kind {
            EventKind::Enter { comm, round } => self.handle_enter(comm, round, rank, hooks),
            EventKind::SendDone { comm, round } => {
                self.handle_send_done(comm, round, rank, ev.channel as usize, hooks, completions)
            }
            EventKind::Arrive { comm, round, from } => self.handle_arrive(
                comm,
                round,
                rank,
                ev.channel as usize,
                Some(from),
                hooks,
                completions,
            ),
            EventKind::PseudoArrive { comm, round } => self.handle_arrive(
                comm,
                round,
                rank,
                ev.channel as usize,
                None,
                hooks,
                completions,
            ),
        }
    }

    fn handle_enter(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        rank: RankId,
        hooks: &mut dyn SimHooks,
    ) {
        let now = self.clock.now_us;
        if self.rank_exec[rank.0 as usize].frozen {
            return;
        }
        let (inconsistent, lane_recvs, descriptor, factor, dead_on_entry) = {
            let state = match self.rounds.get_mut(&(comm, round)) {
                Some(s) => s,
                None => return,
            };
            let rr = match state.ranks.get_mut(&rank) {
                Some(r) => r,
                None => return,
            };
            rr.entered = true;
            rr.enter_us = now;
            let lane_recvs: Vec<u64> = rr.lanes.iter().map(|l| l.total_recv_units()).collect();
            (
                rr.inconsistent,
                lane_recvs,
                rr.descriptor,
                rr.bandwidth_factor,
                rr.freeze_allowance == Some(0),
            )
        };
        hooks.on_enter(rank, comm, round, now);
        self.push_trace(rank, 0, TraceEventKind::Enter { comm, round });
        if dead_on_entry {
            // Zero allowance: the kernel dies before retiring anything.
            self.rank_exec[rank.0 as usize].frozen = true;
            self.push_trace(rank, 0, TraceEventKind::Freeze { comm, round });
            return;
        }
        if inconsistent {
            // The victim's conflicting operation cannot interoperate with
            // its peers, so its expected receives are satisfied on its own
            // service clock, as if a phantom peer fed it.
            for (channel, &units) in lane_recvs.iter().enumerate() {
                let service = self.service_us(rank, channel, &descriptor, factor);
                for i in 1..=units {
                    self.schedule(
                        now + self.config.base_latency_us + i * service,
                        rank,
                        channel,
                        EventKind::PseudoArrive { comm, round },
                    );
                }
            }
        }
        let channels = self.config.channels_per_rank as usize;
        for channel in 0..channels {
            // Data may already be buffered for a late entrant.
            self.drain_consumption(comm, round, rank, channel, hooks, &mut Vec::new());
            self.try_start_send(comm, round, rank, channel);
        }
    }

    fn try_start_send(&mut self, comm: CommunicatorId, round: u64, rank: RankId, channel: usize) {
        if self.rank_exec[rank.0 as usize].frozen {
            return;
        }
        let now = self.clock.now_us;
        let service = {
            let state = match self.rounds.get_mut(&(comm, round)) {
                Some(s) => s,
                None => return,
            };
            let rr = match state.ranks.get_mut(&rank) {
                Some(r) => r,
                None => return,
            };
            if !rr.entered || rr.complete {
                return;
            }
            let descriptor = rr.descriptor;
            let factor = rr.bandwidth_factor;
            let inconsistent = rr.inconsistent;
            let lane = &mut rr.lanes[channel];
            let (step, target) = match lane.next_send() {
                Some(next) => next,
                None => return,
            };
            // A full transport buffer toward the target blocks the lane
            // until the peer consumes. The self-contained conflicting
            // victim is exempt: its traffic interoperates with nothing.
            if !inconsistent {
                let outstanding = rr.edge_outstanding[channel]
                    .get(&target)
                    .copied()
                    .unwrap_or(0);
                if outstanding >= self.config.edge_budget_units {
                    return;
                }
                *rr.edge_outstanding[channel].entry(target).or_insert(0) += 1;
            }
            let lane = &mut rr.lanes[channel];
            lane.busy = true;
            lane.in_service_to = target;
            lane.in_service_step = step;
            self.service_us(rank, channel, &descriptor, factor)
        };
        self.schedule(now + service, rank, channel, EventKind::SendDone { comm, round });
    }

    fn handle_send_done(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        rank: RankId,
        channel: usize,
        hooks: &mut dyn SimHooks,
        completions: &mut Vec<RoundCompletion>,
    ) {
        let now = self.clock.now_us;
        if self.rank_exec[rank.0 as usize].frozen {
            // The kernel died while this unit was in flight; it never
            // retires and is never counted.
            return;
        }
        let (target, step, handle, froze, complete) = {
            let state = match self.rounds.get_mut(&(comm, round)) {
                Some(s) => s,
                None => return,
            };
            let rr = match state.ranks.get_mut(&rank) {
                Some(r) => r,
                None => return,
            };
            let lane = &mut rr.lanes[channel];
            debug_assert!(lane.busy);
            lane.busy = false;
            let target = lane.in_service_to;
            let step = lane.in_service_step;
            lane.retire_send();
            rr.sends_remaining -= 1;
            let mut froze = false;
            if let Some(allowance) = rr.freeze_allowance.as_mut() {
                // This unit retires (it started before the fault point) and
                // spends the allowance; at zero the kernel dies with it.
                *allowance -= 1;
                froze = *allowance == 0;
            }
            let complete = !froze && rr.sends_remaining == 0 && rr.recvs_remaining == 0;
            (target, step, rr.handle, froze, complete)
        };
        // A unit that retires before the freeze point is counted and
        // delivered; the freeze takes effect with it.
        self.frames[rank.0 as usize]
            .record(handle, channel, Direction::Send, 1)
            .expect("lane channel within frame");
        hooks.on_record(rank, comm, round, channel, true, now);
        if self.record_unit_events {
            self.push_trace(
                rank,
                channel,
                TraceEventKind::SendUnit {
                    comm,
                    round,
                    step,
                    to: target,
                },
            );
        }
        self.schedule(
            now + self.config.base_latency_us,
            target,
            channel,
            EventKind::Arrive { comm, round, from: rank },
        );
        if froze {
            self.rank_exec[rank.0 as usize].frozen = true;
            self.push_trace(rank, channel, TraceEventKind::Freeze { comm, round });
            return;
        }
        if complete {
            self.complete_rank(comm, round, rank, hooks, completions);
        } else {
            // The kernel moved on a step; receives it has now reached
            // become consumable.
            self.drain_consumption(comm, round, rank, channel, hooks, completions);
            self.try_start_send(comm, round, rank, channel);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn handle_arrive(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        rank: RankId,
        channel: usize,
        from: Option<RankId>,
        hooks: &mut dyn SimHooks,
        completions: &mut Vec<RoundCompletion>,
    ) {
        if self.rank_exec[rank.0 as usize].frozen {
            return; // dead kernel executes no receive instruction
        }
        {
            let state = match self.rounds.get_mut(&(comm, round)) {
                Some(s) => s,
                None => return,
            };
            // Traffic from a rank running a different operation cannot
            // satisfy this rank's expectations.
            if let Some(sender) = from {
                let sender_desc = state.ranks.get(&sender).map(|r| r.descriptor);
                let own_desc = state.ranks.get(&rank).map(|r| r.descriptor);
                match (sender_desc, own_desc) {
                    (Some(s), Some(o)) if s == o => {}
                    _ => return,
                }
            }
            let rr = match state.ranks.get_mut(&rank) {
                Some(r) => r,
                None => return, // never posted this round
            };
            if from.is_some() && rr.inconsistent {
                return; // the victim only consumes its phantom traffic
            }
            // The unit lands in the channel buffer; the kernel counts it
            // only when its own execution reaches the matching step.
            if rr.lanes[channel].book_arrival(from).is_none() {
                return; // no expectation from this peer
            }
        }
        self.drain_consumption(comm, round, rank, channel, hooks, completions);
    }

    /// Consumes every buffered unit the rank's kernel has reached on this
    /// lane, counting the receives, releasing sender buffer slots, and
    /// restarting anything that unblocked.
    #[allow(clippy::too_many_arguments)]
    fn drain_consumption(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        rank: RankId,
        channel: usize,
        hooks: &mut dyn SimHooks,
        completions: &mut Vec<RoundCompletion>,
    ) {
        let now = self.clock.now_us;
        loop {
            let (step, sender, handle, inconsistent, complete) = {
                let state = match self.rounds.get_mut(&(comm, round)) {
                    Some(s) => s,
                    None => return,
                };
                let rr = match state.ranks.get_mut(&rank) {
                    Some(r) => r,
                    None => return,
                };
                if !rr.entered || rr.complete {
                    return;
                }
                let (step, sender) = match rr.lanes[channel].consume_next() {
                    Some(c) => c,
                    None => return,
                };
                rr.recvs_remaining -= 1;
                let complete = rr.sends_remaining == 0 && rr.recvs_remaining == 0;
                (step, sender, rr.handle, rr.inconsistent, complete)
            };
            self.frames[rank.0 as usize]
                .record(handle, channel, Direction::Recv, 1)
                .expect("lane channel within frame");
            hooks.on_record(rank, comm, round, channel, false, now);
            if self.record_unit_events {
                self.push_trace(
                    rank,
                    channel,
                    TraceEventKind::RecvUnit {
                        comm,
                        round,
                        step,
                        from: sender,
                    },
                );
            }
            // Free the sender's buffer slot; phantom traffic held none.
            if !inconsistent {
                if let Some(state) = self.rounds.get_mut(&(comm, round)) {
                    if let Some(sender_rr) = state.ranks.get_mut(&sender) {
                        if let Some(outstanding) =
                            sender_rr.edge_outstanding[channel].get_mut(&rank)
                        {
                            *outstanding = outstanding.saturating_sub(1);
                        }
                    }
                }
                self.try_start_send(comm, round, sender, channel);
            }
            if complete {
                self.complete_rank(comm, round, rank, hooks, completions);
                return;
            }
            self.try_start_send(comm, round, rank, channel);
        }
    }

    fn complete_rank(
        &mut self,
        comm: CommunicatorId,
        round: u64,
        rank: RankId,
        hooks: &mut dyn SimHooks,
        completions: &mut Vec<RoundCompletion>,
    ) {
        let now = self.clock.now_us;
        {
            let state = self.rounds.get_mut(&(comm, round)).expect("round exists");
            let rr = state.ranks.get_mut(&rank).expect("rank in round");
            rr.complete = true;
        }
        hooks.on_complete(rank, comm, round, now);
        self.push_trace(rank, 0, TraceEventKind::Complete { comm, round });
        completions.push(RoundCompletion {
            rank,
            comm,
            round,
            at_us: now,
        });
        // Drop fully completed rounds; no events can reference them again.
        if self.rounds[&(comm, round)]
            .ranks
            .values()
            .all(|r| r.complete)
        {
            let comm_members = self.comms[&comm].size();
            let state_members = self.rounds[&(comm, round)].ranks.len();
            if comm_members == state_members {
                self.rounds.remove(&(comm, round));
            }
        }
        // The rank moves on to its next queued round, FIFO.
        let exec = &mut self.rank_exec[rank.0 as usize];
        exec.active = None;
        if let Some((c, r, ready)) = exec.queue.pop_front() {
            exec.active = Some((c, r));
            self.schedule(ready.max(now), rank, 0, EventKind::Enter { comm: c, round: r });
        }
    }

    /// Per-rank enter time of a round still tracked by the engine.
    pub fn round_enter_time(&self, comm: CommunicatorId, round: u64, rank: RankId) -> Option<u64> {
        self.rounds
            .get(&(comm, round))
            .and_then(|s| s.ranks.get(&rank))
            .filter(|r| r.entered)
            .map(|r| r.enter_us)
    }
}

/// Replacement descriptor an inconsistent victim runs when none was given:
/// the posted operation with its name flipped to a conflicting one that is
/// still valid for the algorithm.
pub fn default_substitute(descriptor: &OperationDescriptor) -> OperationDescriptor {
    let op_name = match (descriptor.op_name, descriptor.algorithm) {
        (OpKind::AllReduce, Algorithm::Ring) => OpKind::AllGather,
        (OpKind::AllReduce, Algorithm::Tree) => OpKind::Broadcast,
        (_, _) => OpKind::AllReduce,
    };
    OperationDescriptor {
        op_name,
        ..*descriptor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Protocol;

    const MIB: u64 = 1024 * 1024;

    fn allreduce(bytes: u64) -> OperationDescriptor {
        OperationDescriptor::new(OpKind::AllReduce, Algorithm::Ring, Protocol::Simple, bytes)
            .unwrap()
    }

    fn ring_cluster(n: u32, channels: u32) -> (Cluster, CommunicatorId) {
        let mut config = ClusterConfig::new(n, channels, 0);
        config.base_latency_us = 5;
        let mut cluster = Cluster::build(config).unwrap();
        let comm = cluster
            .create_communicator((0..n).map(RankId).collect(), Algorithm::Ring)
            .unwrap();
        (cluster, comm)
    }

    fn final_counts(cluster: &Cluster, n: u32, round: u64) -> Vec<(u64, u64)> {
        (0..n)
            .map(|r| {
                let snap = cluster
                    .frame(RankId(r))
                    .read_block((round % NUM_BLOCKS as u64) as usize);
                snap.counts
                    .iter()
                    .fold((0, 0), |acc, &(s, rx)| (acc.0 + s, acc.1 + rx))
            })
            .collect()
    }

    use crate::trace::NUM_BLOCKS;

    #[test]
    fn build_cluster_allocates_one_frame_per_rank() {
        let (cluster, _) = ring_cluster(4, 2);
        for r in 0..4 {
            assert_eq!(cluster.frame(RankId(r)).num_channels(), 2);
            assert_eq!(cluster.frame(RankId(r)).op_counter(), 0);
        }
    }

    #[test]
    fn single_rank_communicator_is_invalid() {
        let mut cluster = Cluster::build(ClusterConfig::new(1, 1, 0)).unwrap();
        assert!(cluster
            .create_communicator(vec![RankId(0)], Algorithm::Ring)
            .is_err());
    }

    #[test]
    fn fault_free_ring_round_completes_uniformly() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(10_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 4);
        let counts = final_counts(&cluster, 4, 0);
        // 6 steps x 2 units: every rank sent and received 12 units.
        assert!(counts.iter().all(|&c| c == (12, 12)));
        // Conservation over the completed round.
        let sends: u64 = counts.iter().map(|c| c.0).sum();
        let recvs: u64 = counts.iter().map(|c| c.1).sum();
        assert_eq!(sends, recvs);
        // All ranks complete at the same instant in a symmetric ring.
        let t0 = completions[0].at_us;
        assert!(completions.iter().all(|c| c.at_us == t0));
    }

    #[test]
    fn identical_seed_replays_identical_trace() {
        let run = |seed: u64| {
            let mut config = ClusterConfig::new(4, 2, seed);
            config.entry_jitter_us = 500;
            let mut cluster = Cluster::build(config).unwrap();
            let comm = cluster
                .create_communicator((0..4).map(RankId).collect(), Algorithm::Ring)
                .unwrap();
            for round in 0..3 {
                cluster
                    .post_collective(comm, allreduce(MIB), round, &mut NoopHooks)
                    .unwrap();
                cluster.advance((round + 1) * 5_000_000, &mut NoopHooks);
            }
            cluster
                .take_trace()
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a, b);
        let c = run(8);
        assert_ne!(a, c, "different seeds should shift entry jitter");
    }

    #[test]
    fn not_entered_victim_keeps_stale_counter_and_starves_peers() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        // One clean round, then the victim misses round 1.
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        cluster.advance(10_000_000, &mut NoopHooks);
        let mut fault = FaultSpec::new(FaultKind::NotEnteredHang, RankId(2), 1);
        fault.comm = Some(comm);
        cluster.add_fault(fault).unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 1, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(400_000_000, &mut NoopHooks);
        assert!(completions.is_empty(), "peers must wedge without the victim");
        // Victim's operation counter is strictly behind every peer's.
        assert_eq!(cluster.frame(RankId(2)).op_counter(), 1);
        for r in [0u32, 1, 3] {
            assert_eq!(cluster.frame(RankId(r)).op_counter(), 2);
        }
        // Blocked peers made partial progress and then froze.
        let counts = final_counts(&cluster, 4, 1);
        assert!(counts[2] == (0, 0));
        assert!(counts.iter().any(|&(s, _)| s > 0));
        let before: Vec<_> = final_counts(&cluster, 4, 1);
        cluster.advance(800_000_000, &mut NoopHooks);
        assert_eq!(before, final_counts(&cluster, 4, 1), "no further progress");
    }

    #[test]
    fn comp_slow_victim_enters_late() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        let mut fault = FaultSpec::new(FaultKind::CompSlow, RankId(1), 0);
        fault.entry_delay_us = 30_000_000;
        cluster.add_fault(fault).unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(120_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 4);
        assert_eq!(
            cluster.trace().iter().find_map(|e| match e.kind {
                TraceEventKind::Enter { .. } if e.rank == 1 => Some(e.time_us),
                _ => None,
            }),
            Some(30_000_000)
        );
        // The late entrant has the shortest own-duration round.
        let enters: Vec<u64> = (0..4)
            .map(|r| {
                cluster
                    .trace()
                    .iter()
                    .find_map(|e| match e.kind {
                        TraceEventKind::Enter { .. } if e.rank == r => Some(e.time_us),
                        _ => None,
                    })
                    .unwrap()
            })
            .collect();
        let durations: Vec<u64> = completions
            .iter()
            .map(|c| c.at_us - enters[c.rank.0 as usize])
            .collect();
        let victim_duration = completions
            .iter()
            .zip(&durations)
            .find(|(c, _)| c.rank == RankId(1))
            .map(|(_, &d)| d)
            .unwrap();
        assert!(durations.iter().all(|&d| d >= victim_duration));
    }

    #[test]
    fn hardware_fault_victim_has_minimal_counts() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        let mut fault = FaultSpec::new(FaultKind::HardwareFault, RankId(0), 0);
        fault.freeze_after_fraction = 0.5;
        cluster.add_fault(fault).unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(600_000_000, &mut NoopHooks);
        assert!(completions.is_empty(), "a dead kernel wedges the ring");
        assert!(cluster.is_frozen(RankId(0)));
        let counts = final_counts(&cluster, 4, 0);
        let totals: Vec<u64> = counts.iter().map(|&(s, r)| s + r).collect();
        // The victim stopped counting first; every peer overtook it.
        assert!(
            totals[1..].iter().all(|&t| t > totals[0]),
            "victim total {} vs peers {:?}",
            totals[0],
            &totals[1..]
        );
        // It retired exactly half of its 12 planned send units.
        assert_eq!(counts[0].0, 6);
    }

    #[test]
    fn comm_slow_scales_completion_by_the_bandwidth_factor() {
        // Closed-form service-time oracle, exact with zero latency: the
        // throttled rank is the bottleneck of every step, so the round
        // stretches by exactly 1/factor.
        let run = |factor: Option<f64>| {
            let mut config = ClusterConfig::new(4, 1, 0);
            config.base_latency_us = 0;
            let mut cluster = Cluster::build(config).unwrap();
            let comm = cluster
                .create_communicator((0..4).map(RankId).collect(), Algorithm::Ring)
                .unwrap();
            if let Some(f) = factor {
                let mut fault = FaultSpec::new(FaultKind::CommSlow, RankId(1), 0);
                fault.bandwidth_factor = f;
                cluster.add_fault(fault).unwrap();
            }
            let completions = cluster
                .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
                .map(|_| cluster.advance(1_000_000_000, &mut NoopHooks))
                .unwrap();
            assert_eq!(completions.len(), 4);
            completions
                .iter()
                .find(|c| c.rank == RankId(1))
                .unwrap()
                .at_us
        };
        let free = run(None);
        let slow = run(Some(0.25));
        // 6 steps x 2 units x 128 us = 1536 us fault-free.
        assert_eq!(free, 1536);
        assert_eq!(slow, 4 * free);
    }

    #[test]
    fn comm_slow_victim_finishes_last_up_to_one_latency_hop() {
        // The victim's successor still has to receive the victim's final
        // unit, so it exits exactly one latency hop later; everyone else
        // strictly precedes the victim.
        let (mut cluster, comm) = ring_cluster(4, 1);
        let latency = cluster.config().base_latency_us;
        let mut fault = FaultSpec::new(FaultKind::CommSlow, RankId(2), 0);
        fault.bandwidth_factor = 0.25;
        cluster.add_fault(fault).unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(1_000_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 4);
        let victim_at = completions
            .iter()
            .find(|c| c.rank == RankId(2))
            .unwrap()
            .at_us;
        let max_at = completions.iter().map(|c| c.at_us).max().unwrap();
        assert!(victim_at + latency >= max_at);
        for c in completions.iter().filter(|c| c.rank != RankId(3)) {
            assert!(c.at_us <= victim_at);
        }
    }

    #[test]
    fn inconsistent_victim_completes_alone_with_substitute_descriptor() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        let fault = FaultSpec::new(FaultKind::InconsistentHang, RankId(3), 0);
        cluster.add_fault(fault).unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(600_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 1, "only the victim finishes");
        assert_eq!(completions[0].rank, RankId(3));
        // The victim posted a conflicting operation.
        let victim_desc = cluster.trace().iter().find_map(|e| match &e.kind {
            TraceEventKind::Post { descriptor, .. } if e.rank == 3 => Some(*descriptor),
            _ => None,
        });
        assert_eq!(victim_desc.unwrap().op_name, OpKind::AllGather);
    }

    #[test]
    fn rounds_queue_fifo_per_rank() {
        let (mut cluster, comm) = ring_cluster(4, 1);
        cluster
            .post_collective(comm, allreduce(4 * MIB), 0, &mut NoopHooks)
            .unwrap();
        cluster
            .post_collective(comm, allreduce(4 * MIB), 1, &mut NoopHooks)
            .unwrap();
        // Round 1 enters only after round 0 completes on each rank.
        let completions = cluster.advance(100_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 8);
        let r0_done = completions
            .iter()
            .filter(|c| c.round == 0)
            .map(|c| c.at_us)
            .max()
            .unwrap();
        let r1_enter = cluster
            .trace()
            .iter()
            .filter_map(|e| match e.kind {
                TraceEventKind::Enter { round: 1, .. } => Some(e.time_us),
                _ => None,
            })
            .min()
            .unwrap();
        assert!(r1_enter >= r0_done - 1_000, "round 1 waits for round 0");
    }

    #[test]
    fn posting_wrong_round_is_desync() {
        let (mut cluster, comm) = ring_cluster(2, 1);
        let err = cluster
            .post_collective(comm, allreduce(MIB), 3, &mut NoopHooks)
            .unwrap_err();
        assert!(matches!(err, Error::TraceDesync { expected: 0, got: 3 }));
    }

    #[test]
    fn point_to_point_send_counts_one_direction() {
        let mut cluster = Cluster::build(ClusterConfig::new(2, 1, 0)).unwrap();
        let comm = cluster
            .create_communicator(vec![RankId(0), RankId(1)], Algorithm::Ring)
            .unwrap();
        let desc =
            OperationDescriptor::new(OpKind::Send, Algorithm::Ring, Protocol::Simple, 2 * MIB)
                .unwrap();
        cluster.post_collective(comm, desc, 0, &mut NoopHooks).unwrap();
        let completions = cluster.advance(10_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 2);
        let counts = final_counts(&cluster, 2, 0);
        assert_eq!(counts[0], (4, 0));
        assert_eq!(counts[1], (0, 4));
    }

    #[test]
    fn tree_allreduce_same_layer_finishes_with_identical_counts() {
        let mut cluster = Cluster::build(ClusterConfig::new(7, 2, 0)).unwrap();
        let comm = cluster
            .create_communicator((0..7).map(RankId).collect(), Algorithm::Tree)
            .unwrap();
        let desc =
            OperationDescriptor::new(OpKind::AllReduce, Algorithm::Tree, Protocol::Simple, 8 * MIB)
                .unwrap();
        cluster
            .post_collective(comm, desc, 0, &mut NoopHooks)
            .unwrap();
        let completions = cluster.advance(100_000_000, &mut NoopHooks);
        assert_eq!(completions.len(), 7);
        let counts = final_counts(&cluster, 7, 0);
        // Heap layout: member 0 is the root, 1..3 layer one, 3..7 leaves.
        assert_eq!(counts[1], counts[2]);
        assert!(counts[3..].iter().all(|&c| c == counts[3]));
        let sends: u64 = counts.iter().map(|c| c.0).sum();
        let recvs: u64 = counts.iter().map(|c| c.1).sum();
        assert_eq!(sends, recvs);
    }
}
