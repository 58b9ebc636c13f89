//! Diagnostic data model: trace identifiers, per-rank probing frames, and
//! metric snapshots.
//!
//! Binary layouts are fixed and little-endian; they are the crate's
//! interchange format for frame dumps.
//!
//! ```text
//! TraceId (16 bytes):   comm_id u64 | op_counter u32 | extension u32
//!
//! ProbingFrame (1184 bytes):
//!   header (32 bytes @ 0):   op_counter u64 | mode_flag u64
//!                          | kernel_index u64 | num_channels u64
//!   block b (144 bytes @ 32 + 144*b):
//!     trace_id (16 bytes @ 0)
//!     channel c: send_count u64 @ 16 + 16*c, recv_count u64 @ 24 + 16*c
//! ```
//!
//! One designated writer mutates a frame (the rank's kernel executor); any
//! number of readers may sample it concurrently. All counter fields are
//! 64-bit atomics; readers never block the writer. A reader may observe a
//! torn *set* of fields mid-update, but each individual counter it reads is
//! valid and monotone within a round.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use num_rational::Ratio;

use crate::error::{Error, Result};

/// Parallel transfer lanes per rank. Fixed by the frame layout.
pub const MAX_CHANNELS: usize = 8;
/// Cyclic body blocks per frame. Fixed by the frame layout.
pub const NUM_BLOCKS: usize = 8;

pub const TRACE_ID_BYTES: usize = 16;
pub const FRAME_HEADER_BYTES: usize = 32;
pub const FRAME_BLOCK_BYTES: usize = 144;
pub const FRAME_BYTES: usize = FRAME_HEADER_BYTES + NUM_BLOCKS * FRAME_BLOCK_BYTES;

/// Extension-field flag: the owning rank entered the round.
pub const EXT_ROUND_ENTERED: u32 = 1 << 0;
/// Extension-field flag: the owning rank completed the round.
pub const EXT_ROUND_COMPLETE: u32 = 1 << 1;

/// Global rank index within a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RankId(pub u32);

impl fmt::Display for RankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of one communicator, identical on every member rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CommunicatorId(pub u64);

impl fmt::Display for CommunicatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Decentralized label for one communication round on one communicator.
///
/// All member ranks construct the same id for the same round, so equal ids
/// across ranks mean "the same collective". The extension field is spare
/// room for status flags (see [`EXT_ROUND_ENTERED`]); it is zero when
/// unused, which keeps the encoding byte-identical across ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceId {
    pub comm_id: CommunicatorId,
    pub op_counter: u32,
    pub extension: u32,
}

/// Builds a [`TraceId`]; counters wider than 32 bits wrap modulo 2^32.
///
/// The frame header keeps the full 64-bit counter, so the truncation here
/// never makes two in-flight rounds ambiguous.
pub fn make_trace_id(comm_id: CommunicatorId, op_counter: u64, extension: u32) -> TraceId {
    TraceId {
        comm_id,
        op_counter: op_counter as u32,
        extension,
    }
}

pub fn encode_trace_id(t: &TraceId) -> [u8; TRACE_ID_BYTES] {
    let mut out = [0u8; TRACE_ID_BYTES];
    out[0..8].copy_from_slice(&t.comm_id.0.to_le_bytes());
    out[8..12].copy_from_slice(&t.op_counter.to_le_bytes());
    out[12..16].copy_from_slice(&t.extension.to_le_bytes());
    out
}

pub fn decode_trace_id(bytes: &[u8]) -> Result<TraceId> {
    if bytes.len() != TRACE_ID_BYTES {
        return Err(Error::MalformedRecord(format!(
            "trace id must be {TRACE_ID_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    Ok(TraceId {
        comm_id: CommunicatorId(u64::from_le_bytes(bytes[0..8].try_into().unwrap())),
        op_counter: u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
        extension: u32::from_le_bytes(bytes[12..16].try_into().unwrap()),
    })
}

/// Maps an operation counter onto a cyclic body block.
pub fn block_index(op_counter: u64, num_blocks: u64) -> Result<u64> {
    if num_blocks == 0 {
        return Err(Error::InvalidConfiguration(
            "num_blocks must be positive".into(),
        ));
    }
    Ok(op_counter % num_blocks)
}

/// Collective operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    AllReduce,
    AllGather,
    ReduceScatter,
    AlltoAll,
    Broadcast,
    Send,
    Recv,
}

impl OpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::AllReduce => "allreduce",
            OpKind::AllGather => "allgather",
            OpKind::ReduceScatter => "reducescatter",
            OpKind::AlltoAll => "alltoall",
            OpKind::Broadcast => "broadcast",
            OpKind::Send => "send",
            OpKind::Recv => "recv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "allreduce" => Some(OpKind::AllReduce),
            "allgather" => Some(OpKind::AllGather),
            "reducescatter" => Some(OpKind::ReduceScatter),
            "alltoall" => Some(OpKind::AlltoAll),
            "broadcast" => Some(OpKind::Broadcast),
            "send" => Some(OpKind::Send),
            "recv" => Some(OpKind::Recv),
            _ => None,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Communication algorithm structuring a collective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Ring,
    Tree,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ring => "ring",
            Algorithm::Tree => "tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ring" => Some(Algorithm::Ring),
            "tree" => Some(Algorithm::Tree),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Line format / chunking granularity used to move data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Simple,
    LL,
    LL128,
}

impl Protocol {
    /// Payload bytes carried per primitive transfer unit.
    pub fn unit_payload_bytes(&self) -> u64 {
        match self {
            Protocol::Simple => 512 * 1024,
            Protocol::LL => 128,
            Protocol::LL128 => 480,
        }
    }

    /// Wire bytes occupied per primitive transfer unit (payload + line
    /// framing overhead).
    pub fn unit_line_bytes(&self) -> u64 {
        match self {
            Protocol::Simple => 512 * 1024,
            Protocol::LL => 256,
            Protocol::LL128 => 512,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Simple => "simple",
            Protocol::LL => "ll",
            Protocol::LL128 => "ll128",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Some(Protocol::Simple),
            "ll" => Some(Protocol::LL),
            "ll128" => Some(Protocol::LL128),
            _ => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Static per-round metadata; constant for the lifetime of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperationDescriptor {
    pub op_name: OpKind,
    pub algorithm: Algorithm,
    pub protocol: Protocol,
    pub data_size_bytes: u64,
}

impl OperationDescriptor {
    pub fn new(
        op_name: OpKind,
        algorithm: Algorithm,
        protocol: Protocol,
        data_size_bytes: u64,
    ) -> Result<Self> {
        if data_size_bytes == 0 {
            return Err(Error::InvalidConfiguration(
                "data_size_bytes must be positive".into(),
            ));
        }
        Ok(OperationDescriptor {
            op_name,
            algorithm,
            protocol,
            data_size_bytes,
        })
    }
}

impl fmt::Display for OperationDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.op_name, self.algorithm, self.protocol, self.data_size_bytes
        )
    }
}

/// Transfer direction of a primitive unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Send,
    Recv,
}

// ---------------------------------------------------------------------------
// Probing frame
// ---------------------------------------------------------------------------

struct ChannelSlot {
    send: AtomicU64,
    recv: AtomicU64,
}

impl ChannelSlot {
    fn new() -> Self {
        ChannelSlot {
            send: AtomicU64::new(0),
            recv: AtomicU64::new(0),
        }
    }
}

struct FrameBlock {
    // Trace id stored as two atomics so readers are never torn below the
    // 64-bit granularity: comm_id, then (op_counter | extension << 32).
    trace_comm: AtomicU64,
    trace_ctr_ext: AtomicU64,
    slots: [ChannelSlot; MAX_CHANNELS],
}

impl FrameBlock {
    fn new() -> Self {
        FrameBlock {
            trace_comm: AtomicU64::new(0),
            trace_ctr_ext: AtomicU64::new(0),
            slots: std::array::from_fn(|_| ChannelSlot::new()),
        }
    }

    fn set_trace_id(&self, t: &TraceId) {
        self.trace_comm.store(t.comm_id.0, Ordering::Release);
        let packed = (t.op_counter as u64) | ((t.extension as u64) << 32);
        self.trace_ctr_ext.store(packed, Ordering::Release);
    }

    fn trace_id(&self) -> TraceId {
        let comm = self.trace_comm.load(Ordering::Acquire);
        let packed = self.trace_ctr_ext.load(Ordering::Acquire);
        TraceId {
            comm_id: CommunicatorId(comm),
            op_counter: packed as u32,
            extension: (packed >> 32) as u32,
        }
    }

    fn zero_counters(&self) {
        for slot in &self.slots {
            slot.send.store(0, Ordering::Release);
            slot.recv.store(0, Ordering::Release);
        }
    }
}

/// Handle addressing one body block of a frame for the current round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHandle {
    pub index: usize,
}

/// Point-in-time copy of one block, safe to take while the writer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSnapshot {
    pub trace_id: TraceId,
    /// `(send_count, recv_count)` for all eight channel slots; slots at or
    /// beyond `num_channels` stay zero.
    pub counts: [(u64, u64); MAX_CHANNELS],
}

impl BlockSnapshot {
    /// Sum of send and recv counters over all channels.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|(s, r)| s + r).sum()
    }
}

/// Per-rank reusable record of send/recv counters for the eight most recent
/// rounds. Exactly one frame exists per rank; body blocks are reused
/// cyclically as the operation counter advances.
pub struct ProbingFrame {
    op_counter: AtomicU64,
    mode_flag: AtomicU64,
    kernel_index: AtomicU64,
    num_channels: u64,
    blocks: [FrameBlock; NUM_BLOCKS],
}

impl ProbingFrame {
    /// Fresh frame with all counters zero.
    pub fn new(num_channels: u64, measurement_enabled: bool) -> Result<Self> {
        if num_channels == 0 || num_channels > MAX_CHANNELS as u64 {
            return Err(Error::InvalidConfiguration(format!(
                "num_channels must be in 1..={MAX_CHANNELS}, got {num_channels}"
            )));
        }
        Ok(ProbingFrame {
            op_counter: AtomicU64::new(0),
            mode_flag: AtomicU64::new(if measurement_enabled { 1 } else { 0 }),
            kernel_index: AtomicU64::new(0),
            num_channels,
            blocks: std::array::from_fn(|_| FrameBlock::new()),
        })
    }

    pub fn op_counter(&self) -> u64 {
        self.op_counter.load(Ordering::Acquire)
    }

    pub fn kernel_index(&self) -> u64 {
        self.kernel_index.load(Ordering::Acquire)
    }

    pub fn num_channels(&self) -> u64 {
        self.num_channels
    }

    pub fn measurement_enabled(&self) -> bool {
        self.mode_flag.load(Ordering::Acquire) == 1
    }

    /// Claims the block for the next round, zeroing its counters and
    /// stamping the trace id.
    ///
    /// The trace id's counter must equal the frame's current operation
    /// counter (mod 2^32); anything else means the caller and the frame have
    /// drifted apart. Afterward the header points at the following round:
    /// `op_counter` is incremented and `kernel_index` recomputed, so the
    /// header invariant `kernel_index == op_counter mod 8` holds at all
    /// times.
    pub fn begin_round(&self, trace_id: TraceId) -> Result<BlockHandle> {
        let counter = self.op_counter.load(Ordering::Acquire);
        if trace_id.op_counter != counter as u32 {
            return Err(Error::TraceDesync {
                expected: counter,
                got: trace_id.op_counter as u64,
            });
        }
        let index = block_index(counter, NUM_BLOCKS as u64)? as usize;
        let block = &self.blocks[index];
        block.set_trace_id(&trace_id);
        block.zero_counters();
        let next = counter.wrapping_add(1);
        self.op_counter.store(next, Ordering::Release);
        self.kernel_index
            .store(next % NUM_BLOCKS as u64, Ordering::Release);
        Ok(BlockHandle { index })
    }

    /// Adds `delta` to one directional counter of one channel. Only the
    /// addressed counter changes.
    pub fn record(
        &self,
        handle: BlockHandle,
        channel: usize,
        direction: Direction,
        delta: u64,
    ) -> Result<()> {
        if channel >= self.num_channels as usize {
            return Err(Error::InvalidChannel {
                channel,
                num_channels: self.num_channels as usize,
            });
        }
        let slot = &self.blocks[handle.index].slots[channel];
        match direction {
            Direction::Send => slot.send.fetch_add(delta, Ordering::AcqRel),
            Direction::Recv => slot.recv.fetch_add(delta, Ordering::AcqRel),
        };
        Ok(())
    }

    /// Point-in-time copy of one block. Safe to call concurrently with the
    /// writer; each sampled counter is individually valid and monotone,
    /// though the set may straddle an in-progress update.
    pub fn read_block(&self, block: usize) -> BlockSnapshot {
        assert!(block < NUM_BLOCKS, "block index out of range");
        let b = &self.blocks[block];
        let mut counts = [(0u64, 0u64); MAX_CHANNELS];
        for (c, slot) in b.slots.iter().enumerate() {
            counts[c] = (
                slot.send.load(Ordering::Acquire),
                slot.recv.load(Ordering::Acquire),
            );
        }
        BlockSnapshot {
            trace_id: b.trace_id(),
            counts,
        }
    }
}

/// Serializes a frame to its fixed 1,184-byte layout.
pub fn encode_frame(frame: &ProbingFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_BYTES);
    out.extend_from_slice(&frame.op_counter().to_le_bytes());
    out.extend_from_slice(&frame.mode_flag.load(Ordering::Acquire).to_le_bytes());
    out.extend_from_slice(&frame.kernel_index().to_le_bytes());
    out.extend_from_slice(&frame.num_channels.to_le_bytes());
    for b in 0..NUM_BLOCKS {
        let snap = frame.read_block(b);
        out.extend_from_slice(&encode_trace_id(&snap.trace_id));
        for (send, recv) in snap.counts.iter() {
            out.extend_from_slice(&send.to_le_bytes());
            out.extend_from_slice(&recv.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), FRAME_BYTES);
    out
}

/// Reconstructs a frame from its 1,184-byte layout, validating the header
/// invariants.
pub fn decode_frame(bytes: &[u8]) -> Result<ProbingFrame> {
    if bytes.len() != FRAME_BYTES {
        return Err(Error::MalformedRecord(format!(
            "frame must be {FRAME_BYTES} bytes, got {}",
            bytes.len()
        )));
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let op_counter = u64_at(0);
    let mode_flag = u64_at(8);
    let kernel_index = u64_at(16);
    let num_channels = u64_at(24);
    if mode_flag > 1 {
        return Err(Error::MalformedRecord(format!(
            "mode_flag must be 0 or 1, got {mode_flag}"
        )));
    }
    if num_channels == 0 || num_channels > MAX_CHANNELS as u64 {
        return Err(Error::MalformedRecord(format!(
            "num_channels must be in 1..={MAX_CHANNELS}, got {num_channels}"
        )));
    }
    if kernel_index != op_counter % NUM_BLOCKS as u64 {
        return Err(Error::MalformedRecord(format!(
            "kernel_index {kernel_index} inconsistent with op_counter {op_counter}"
        )));
    }
    let frame = ProbingFrame::new(num_channels, mode_flag == 1)?;
    frame.op_counter.store(op_counter, Ordering::Release);
    frame.kernel_index.store(kernel_index, Ordering::Release);
    for b in 0..NUM_BLOCKS {
        let base = FRAME_HEADER_BYTES + b * FRAME_BLOCK_BYTES;
        let trace_id = decode_trace_id(&bytes[base..base + TRACE_ID_BYTES])?;
        frame.blocks[b].set_trace_id(&trace_id);
        for c in 0..MAX_CHANNELS {
            let slot = &frame.blocks[b].slots[c];
            slot.send
                .store(u64_at(base + 16 + 16 * c), Ordering::Release);
            slot.recv
                .store(u64_at(base + 24 + 16 * c), Ordering::Release);
        }
    }
    Ok(frame)
}

// ---------------------------------------------------------------------------
// Metric snapshot
// ---------------------------------------------------------------------------

/// Progress rate derived from counter-change counts: `1/changes`, or zero
/// as the stalled sentinel.
pub type Rate = Ratio<u64>;

/// Why a snapshot was emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SnapshotReason {
    /// The rank finished the round; `complete_time_us` is set.
    Completion,
    /// Periodic report for a round still in flight.
    Heartbeat,
}

impl SnapshotReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SnapshotReason::Completion => "completion",
            SnapshotReason::Heartbeat => "heartbeat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "completion" => Some(SnapshotReason::Completion),
            "heartbeat" => Some(SnapshotReason::Heartbeat),
            _ => None,
        }
    }
}

/// One rank's complete measurement of one round at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSnapshot {
    pub rank: RankId,
    pub trace_id: TraceId,
    pub descriptor: OperationDescriptor,
    pub reason: SnapshotReason,
    /// `(send_count, recv_count)` per active channel.
    pub per_channel_counts: Vec<(u64, u64)>,
    /// Minimum over active channels; `None` until the sampler has observed
    /// anything for this round.
    pub send_rate: Option<Rate>,
    pub recv_rate: Option<Rate>,
    pub enter_time_us: u64,
    /// Absent while the round is still running.
    pub complete_time_us: Option<u64>,
    /// `complete - enter` once complete, elapsed-so-far otherwise.
    pub duration_us: u64,
}

impl MetricSnapshot {
    /// Sum of send and recv counters over all channels.
    pub fn total_count(&self) -> u64 {
        self.per_channel_counts.iter().map(|(s, r)| s + r).sum()
    }

    /// Worst progress rate across directions, used for rank attribution.
    pub fn min_rate(&self) -> Option<Rate> {
        match (self.send_rate, self.recv_rate) {
            (Some(s), Some(r)) => Some(s.min(r)),
            (Some(s), None) => Some(s),
            (None, Some(r)) => Some(r),
            (None, None) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_id_identity_construction() {
        let t = make_trace_id(CommunicatorId(7), 0, 0);
        assert_eq!(
            t,
            TraceId {
                comm_id: CommunicatorId(7),
                op_counter: 0,
                extension: 0
            }
        );
    }

    #[test]
    fn trace_id_counter_wraps_modulo_2_32() {
        let t = make_trace_id(CommunicatorId(7), (1u64 << 32) + 5, 0);
        assert_eq!(t.op_counter, 5);
        assert_eq!(t.comm_id, CommunicatorId(7));
    }

    #[test]
    fn trace_id_identical_across_ranks_for_same_round() {
        // Two ranks of communicator 7 at round 12 build their ids
        // independently; the byte encodings must match exactly.
        let a = encode_trace_id(&make_trace_id(CommunicatorId(7), 12, 0));
        let b = encode_trace_id(&make_trace_id(CommunicatorId(7), 12, 0));
        assert_eq!(a, b);
        assert_eq!(a.len(), TRACE_ID_BYTES);
    }

    #[test]
    fn trace_id_zero_encodes_to_zero_bytes() {
        let t = make_trace_id(CommunicatorId(0), 0, 0);
        assert_eq!(encode_trace_id(&t), [0u8; 16]);
    }

    #[test]
    fn trace_id_decode_rejects_wrong_length() {
        assert!(matches!(
            decode_trace_id(&[0u8; 15]),
            Err(Error::MalformedRecord(_))
        ));
    }

    #[test]
    fn block_index_examples() {
        assert_eq!(block_index(0, 8).unwrap(), 0);
        assert_eq!(block_index(10, 8).unwrap(), 2);
        // Round 8 reuses block 0.
        assert_eq!(block_index(8, 8).unwrap(), 0);
        assert!(matches!(
            block_index(3, 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    fn tid(counter: u64) -> TraceId {
        make_trace_id(CommunicatorId(1), counter, 0)
    }

    #[test]
    fn begin_round_selects_block_zero_on_fresh_frame() {
        let frame = ProbingFrame::new(8, true).unwrap();
        let h = frame.begin_round(tid(0)).unwrap();
        assert_eq!(h.index, 0);
        let snap = frame.read_block(0);
        assert!(snap.counts.iter().all(|&(s, r)| s == 0 && r == 0));
        assert_eq!(frame.op_counter(), 1);
        assert_eq!(frame.kernel_index(), 1);
    }

    #[test]
    fn begin_round_counter_mismatch_is_desync() {
        let frame = ProbingFrame::new(4, true).unwrap();
        for c in 0..3 {
            frame.begin_round(tid(c)).unwrap();
        }
        let err = frame.begin_round(tid(5)).unwrap_err();
        assert!(matches!(err, Error::TraceDesync { expected: 3, got: 5 }));
    }

    #[test]
    fn rounds_cycle_back_onto_block_zero_with_fresh_counters() {
        let frame = ProbingFrame::new(2, true).unwrap();
        for c in 0..8u64 {
            let h = frame.begin_round(tid(c)).unwrap();
            assert_eq!(h.index, (c % 8) as usize);
            frame.record(h, 0, Direction::Send, c + 1).unwrap();
        }
        // Round 8 reuses block 0; its counters must be zeroed again.
        let h = frame.begin_round(tid(8)).unwrap();
        assert_eq!(h.index, 0);
        let snap = frame.read_block(0);
        assert_eq!(snap.trace_id.op_counter, 8);
        assert!(snap.counts.iter().all(|&(s, r)| s == 0 && r == 0));
    }

    #[test]
    fn record_is_additive_and_channel_independent() {
        let frame = ProbingFrame::new(8, true).unwrap();
        let h = frame.begin_round(tid(0)).unwrap();
        frame.record(h, 0, Direction::Send, 1).unwrap();
        frame.record(h, 0, Direction::Send, 1).unwrap();
        frame.record(h, 3, Direction::Recv, 5).unwrap();
        frame.record(h, 0, Direction::Recv, 2).unwrap();
        frame.record(h, 3, Direction::Send, 1).unwrap();
        let snap = frame.read_block(0);
        assert_eq!(snap.counts[0], (2, 2));
        assert_eq!(snap.counts[3], (1, 5));
        assert_eq!(snap.counts[1], (0, 0));
    }

    #[test]
    fn record_rejects_out_of_range_channel() {
        let frame = ProbingFrame::new(8, true).unwrap();
        let h = frame.begin_round(tid(0)).unwrap();
        let err = frame.record(h, 9, Direction::Send, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidChannel {
                channel: 9,
                num_channels: 8
            }
        ));
        // Channels at or beyond num_channels are rejected even inside 0..8.
        let frame2 = ProbingFrame::new(2, true).unwrap();
        let h2 = frame2.begin_round(tid(0)).unwrap();
        assert!(frame2.record(h2, 2, Direction::Send, 1).is_err());
    }

    #[test]
    fn read_block_mid_cycle_sees_round_counter() {
        let frame = ProbingFrame::new(8, true).unwrap();
        for c in 0..11u64 {
            frame.begin_round(tid(c)).unwrap();
        }
        // During round 10 (begun last), block 2 holds its trace id.
        let snap = frame.read_block(2);
        assert_eq!(snap.trace_id.op_counter, 10);
    }

    #[test]
    fn concurrent_reads_observe_monotone_counters() {
        use std::sync::Arc;

        let frame = Arc::new(ProbingFrame::new(1, true).unwrap());
        let h = frame.begin_round(tid(0)).unwrap();
        let reader = {
            let frame = Arc::clone(&frame);
            std::thread::spawn(move || {
                let mut prev = 0u64;
                let mut samples = Vec::new();
                while prev < 1000 {
                    let (send, _) = frame.read_block(0).counts[0];
                    samples.push(send);
                    prev = send;
                }
                samples
            })
        };
        for _ in 0..1000 {
            frame.record(h, 0, Direction::Send, 1).unwrap();
        }
        let samples = reader.join().unwrap();
        assert!(samples.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*samples.last().unwrap(), 1000);
        assert!(samples.iter().all(|&v| v <= 1000));
    }

    #[test]
    fn frame_layout_sizes_and_offsets() {
        assert_eq!(FRAME_BYTES, 1184);
        let frame = ProbingFrame::new(8, true).unwrap();
        let bytes = encode_frame(&frame);
        assert_eq!(bytes.len(), 1184);
        // num_channels sits at header offset 24.
        assert_eq!(
            u64::from_le_bytes(bytes[24..32].try_into().unwrap()),
            8u64
        );
        // Manual layout check: record on channel 3 of block 0 and find the
        // counter at its specified offset.
        let h = frame.begin_round(tid(0)).unwrap();
        frame.record(h, 3, Direction::Send, 7).unwrap();
        frame.record(h, 3, Direction::Recv, 9).unwrap();
        let bytes = encode_frame(&frame);
        let block0 = FRAME_HEADER_BYTES;
        let send_off = block0 + 16 + 16 * 3;
        let recv_off = block0 + 24 + 16 * 3;
        assert_eq!(
            u64::from_le_bytes(bytes[send_off..send_off + 8].try_into().unwrap()),
            7
        );
        assert_eq!(
            u64::from_le_bytes(bytes[recv_off..recv_off + 8].try_into().unwrap()),
            9
        );
    }

    #[test]
    fn frame_decode_rejects_wrong_length() {
        assert!(matches!(
            decode_frame(&vec![0u8; FRAME_BYTES - 1]),
            Err(Error::MalformedRecord(_))
        ));
    }

    #[test]
    fn frame_decode_rejects_inconsistent_header() {
        let frame = ProbingFrame::new(2, true).unwrap();
        frame.begin_round(tid(0)).unwrap();
        let mut bytes = encode_frame(&frame);
        // Corrupt kernel_index so it no longer matches op_counter mod 8.
        bytes[16..24].copy_from_slice(&5u64.to_le_bytes());
        assert!(matches!(
            decode_frame(&bytes),
            Err(Error::MalformedRecord(_))
        ));
    }

    #[test]
    fn frame_round_trips_after_activity() {
        let frame = ProbingFrame::new(3, true).unwrap();
        for c in 0..5u64 {
            let h = frame.begin_round(tid(c)).unwrap();
            for ch in 0..3 {
                frame.record(h, ch, Direction::Send, c * 3 + ch as u64 + 1).unwrap();
                frame.record(h, ch, Direction::Recv, c + ch as u64 + 2).unwrap();
            }
        }
        let bytes = encode_frame(&frame);
        let decoded = decode_frame(&bytes).unwrap();
        assert_eq!(encode_frame(&decoded), bytes);
        assert_eq!(decoded.op_counter(), 5);
        assert_eq!(decoded.kernel_index(), 5);
    }
}
