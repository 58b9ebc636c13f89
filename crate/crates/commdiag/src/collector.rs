//! Out-of-band snapshot transport: ordered per-communicator buffering,
//! deduplication, line-oriented persistence, and replay.
//!
//! The store is line-oriented text. Snapshot lines carry a leading schema
//! version and space-separated fields:
//!
//! ```text
//! v rank comm round reason enter_us complete_us dur_us srate rrate \
//!     ch0s ch0r ... opname algo proto bytes
//! ```
//!
//! `complete_us` is `-` while the round is in flight; rates are exact
//! fractions `num/den`, or `-` before the sampler has observed the round.
//! Communicator registrations interleave with snapshots as
//! `comm ID algo R0,R1,...` lines so a replayed stream carries the
//! membership and topology the analyzer needs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::sim::Communicator;
use crate::trace::{
    Algorithm, CommunicatorId, MetricSnapshot, OpKind, OperationDescriptor, Protocol, RankId,
    Rate, SnapshotReason, TraceId,
};

/// Wire schema version accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Envelope around one emitted [`MetricSnapshot`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub schema_version: u32,
    pub emitted_at_us: u64,
    pub snapshot: MetricSnapshot,
}

impl SnapshotRecord {
    pub fn new(emitted_at_us: u64, snapshot: MetricSnapshot) -> Self {
        SnapshotRecord {
            schema_version: SCHEMA_VERSION,
            emitted_at_us,
            snapshot,
        }
    }
}

/// Communicator registration travelling with the snapshot stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommRecord {
    pub id: CommunicatorId,
    pub algorithm: Algorithm,
    pub members: Vec<RankId>,
}

impl CommRecord {
    pub fn from_communicator(c: &Communicator) -> Self {
        CommRecord {
            id: c.id,
            algorithm: c.algorithm,
            members: c.members.clone(),
        }
    }

    /// Rebuilds the full communicator (ring order or tree layers) from the
    /// registered member order.
    pub fn to_communicator(&self) -> Result<Communicator> {
        Communicator::new(self.id, self.members.clone(), self.algorithm)
    }
}

/// One element of the collector stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Comm(CommRecord),
    Snapshot(SnapshotRecord),
}

impl Record {
    pub fn emitted_at_us(&self) -> Option<u64> {
        match self {
            Record::Comm(_) => None,
            Record::Snapshot(s) => Some(s.emitted_at_us),
        }
    }
}

fn fmt_rate(rate: &Option<Rate>) -> String {
    match rate {
        Some(r) => format!("{}/{}", r.numer(), r.denom()),
        None => "-".into(),
    }
}

fn parse_rate(s: &str) -> Result<Option<Rate>> {
    if s == "-" {
        return Ok(None);
    }
    let (num, den) = s
        .split_once('/')
        .ok_or_else(|| Error::MalformedRecord(format!("rate '{s}' is not num/den")))?;
    let num: u64 = num
        .parse()
        .map_err(|_| Error::MalformedRecord(format!("rate numerator '{num}'")))?;
    let den: u64 = den
        .parse()
        .map_err(|_| Error::MalformedRecord(format!("rate denominator '{den}'")))?;
    if den == 0 {
        return Err(Error::MalformedRecord("rate denominator is zero".into()));
    }
    Ok(Some(Ratio::new(num, den)))
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Record::Comm(c) => {
                let members = c
                    .members
                    .iter()
                    .map(|r| r.0.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                write!(f, "comm {} {} {}", c.id, c.algorithm, members)
            }
            Record::Snapshot(rec) => {
                let s = &rec.snapshot;
                write!(
                    f,
                    "{} {} {} {} {} {} {} {} {} {}",
                    rec.schema_version,
                    s.rank,
                    s.trace_id.comm_id,
                    s.trace_id.op_counter,
                    s.reason.as_str(),
                    s.enter_time_us,
                    s.complete_time_us
                        .map(|t| t.to_string())
                        .unwrap_or_else(|| "-".into()),
                    s.duration_us,
                    fmt_rate(&s.send_rate),
                    fmt_rate(&s.recv_rate),
                )?;
                for (send, recv) in &s.per_channel_counts {
                    write!(f, " {send} {recv}")?;
                }
                write!(
                    f,
                    " {} {} {} {}",
                    s.descriptor.op_name,
                    s.descriptor.algorithm,
                    s.descriptor.protocol,
                    s.descriptor.data_size_bytes
                )
            }
        }
    }
}

/// Parses one stored line back into a record.
pub fn parse_record(line: &str) -> Result<Record> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::MalformedRecord("empty record".into()));
    }
    if tokens[0] == "comm" {
        if tokens.len() != 4 {
            return Err(Error::MalformedRecord(format!(
                "comm record needs 4 fields, got {}",
                tokens.len()
            )));
        }
        let id = CommunicatorId(parse_u64(tokens[1], "communicator id")?);
        let algorithm = Algorithm::parse(tokens[2])
            .ok_or_else(|| Error::MalformedRecord(format!("algorithm '{}'", tokens[2])))?;
        let members = tokens[3]
            .split(',')
            .map(|t| parse_u64(t, "member rank").map(|v| RankId(v as u32)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Record::Comm(CommRecord {
            id,
            algorithm,
            members,
        }));
    }

    let version: u32 = tokens[0]
        .parse()
        .map_err(|_| Error::MalformedRecord(format!("schema version '{}'", tokens[0])))?;
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION,
            got: version,
        });
    }
    // v rank comm round reason enter complete dur srate rrate [2C counts] op algo proto bytes
    if tokens.len() < 16 || !(tokens.len() - 14).is_multiple_of(2) {
        return Err(Error::MalformedRecord(format!(
            "snapshot record has {} fields",
            tokens.len()
        )));
    }
    let channels = (tokens.len() - 14) / 2;
    let rank = RankId(parse_u64(tokens[1], "rank")? as u32);
    let comm = CommunicatorId(parse_u64(tokens[2], "communicator id")?);
    let round = parse_u64(tokens[3], "round")? as u32;
    let reason = SnapshotReason::parse(tokens[4])
        .ok_or_else(|| Error::MalformedRecord(format!("reason '{}'", tokens[4])))?;
    let enter_time_us = parse_u64(tokens[5], "enter time")?;
    let complete_time_us = if tokens[6] == "-" {
        None
    } else {
        Some(parse_u64(tokens[6], "complete time")?)
    };
    let duration_us = parse_u64(tokens[7], "duration")?;
    let send_rate = parse_rate(tokens[8])?;
    let recv_rate = parse_rate(tokens[9])?;
    let mut per_channel_counts = Vec::with_capacity(channels);
    for c in 0..channels {
        let send = parse_u64(tokens[10 + 2 * c], "send count")?;
        let recv = parse_u64(tokens[11 + 2 * c], "recv count")?;
        per_channel_counts.push((send, recv));
    }
    let tail = tokens.len() - 4;
    let op_name = OpKind::parse(tokens[tail])
        .ok_or_else(|| Error::MalformedRecord(format!("operation '{}'", tokens[tail])))?;
    let algorithm = Algorithm::parse(tokens[tail + 1])
        .ok_or_else(|| Error::MalformedRecord(format!("algorithm '{}'", tokens[tail + 1])))?;
    let protocol = Protocol::parse(tokens[tail + 2])
        .ok_or_else(|| Error::MalformedRecord(format!("protocol '{}'", tokens[tail + 2])))?;
    let data_size_bytes = parse_u64(tokens[tail + 3], "data size")?;
    let snapshot = MetricSnapshot {
        rank,
        trace_id: TraceId {
            comm_id: comm,
            op_counter: round,
            extension: 0,
        },
        descriptor: OperationDescriptor {
            op_name,
            algorithm,
            protocol,
            data_size_bytes,
        },
        reason,
        per_channel_counts,
        send_rate,
        recv_rate,
        enter_time_us,
        complete_time_us,
        duration_us,
    };
    let emitted_at_us = enter_time_us + duration_us;
    Ok(Record::Snapshot(SnapshotRecord {
        schema_version: version,
        emitted_at_us,
        snapshot,
    }))
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| Error::MalformedRecord(format!("{what} '{s}'")))
}

/// Ordered, deduplicating store of the snapshot stream.
///
/// Duplicate `(rank, trace id, reason)` snapshots replace the earlier one
/// in place, so periodic heartbeats keep exactly their freshest value while
/// per-rank order is preserved. Malformed input is counted, never fatal.
#[derive(Default)]
pub struct Collector {
    records: Vec<Record>,
    dedup: BTreeMap<(CommunicatorId, u32, RankId, u8), usize>,
    parse_errors: u64,
}

fn reason_key(r: SnapshotReason) -> u8 {
    match r {
        SnapshotReason::Completion => 0,
        SnapshotReason::Heartbeat => 1,
    }
}

impl Collector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record, deduplicating heartbeat refreshes in place.
    pub fn ingest(&mut self, record: Record) {
        match &record {
            Record::Comm(_) => self.records.push(record),
            Record::Snapshot(rec) => {
                let s = &rec.snapshot;
                let key = (
                    s.trace_id.comm_id,
                    s.trace_id.op_counter,
                    s.rank,
                    reason_key(s.reason),
                );
                match self.dedup.get(&key) {
                    Some(&idx) => self.records[idx] = record,
                    None => {
                        self.dedup.insert(key, self.records.len());
                        self.records.push(record);
                    }
                }
            }
        }
    }

    /// Parses and ingests one wire line. Malformed lines increment the
    /// error counter and are skipped; ingestion never halts.
    pub fn ingest_line(&mut self, line: &str) {
        match parse_record(line) {
            Ok(record) => self.ingest(record),
            Err(_) => self.parse_errors += 1,
        }
    }

    pub fn parse_errors(&self) -> u64 {
        self.parse_errors
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes every record, one line each, in ingest order. Returns the
    /// number of records written.
    pub fn persist(&self, path: &Path) -> Result<usize> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for record in &self.records {
            writeln!(file, "{record}")?;
        }
        file.flush()?;
        Ok(self.records.len())
    }

    /// Reads a persisted stream back in its stored order. Unlike live
    /// ingestion this is strict: a malformed or mismatched line is an
    /// error, since the file claims to be our own output.
    pub fn load(path: &Path) -> Result<Vec<Record>> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut records = Vec::new();
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_record(&line)?);
        }
        Ok(records)
    }

    /// Snapshot records for `comm` whose round lies in `[from, to]`, in
    /// ingest order.
    pub fn query(&self, comm: CommunicatorId, from: u64, to: u64) -> Vec<&SnapshotRecord> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Snapshot(s)
                    if s.snapshot.trace_id.comm_id == comm
                        && (s.snapshot.trace_id.op_counter as u64) >= from
                        && (s.snapshot.trace_id.op_counter as u64) <= to =>
                {
                    Some(s)
                }
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn snapshot(rank: u32, round: u32, reason: SnapshotReason, dur: u64) -> SnapshotRecord {
        let snapshot = MetricSnapshot {
            rank: RankId(rank),
            trace_id: TraceId {
                comm_id: CommunicatorId(7),
                op_counter: round,
                extension: 0,
            },
            descriptor: OperationDescriptor {
                op_name: OpKind::AllReduce,
                algorithm: Algorithm::Ring,
                protocol: Protocol::Simple,
                data_size_bytes: 1 << 20,
            },
            reason,
            per_channel_counts: vec![(12, 12), (3, 4)],
            send_rate: Some(Ratio::new(1, 2)),
            recv_rate: Some(Rate::zero()),
            enter_time_us: 100,
            complete_time_us: (reason == SnapshotReason::Completion).then_some(100 + dur),
            duration_us: dur,
        };
        SnapshotRecord::new(100 + dur, snapshot)
    }

    #[test]
    fn snapshot_line_round_trips() {
        let rec = snapshot(3, 9, SnapshotReason::Completion, 5_000);
        let line = Record::Snapshot(rec.clone()).to_string();
        let parsed = parse_record(&line).unwrap();
        assert_eq!(parsed, Record::Snapshot(rec));
    }

    #[test]
    fn heartbeat_line_round_trips_without_completion() {
        let rec = snapshot(1, 2, SnapshotReason::Heartbeat, 42_000);
        let line = Record::Snapshot(rec.clone()).to_string();
        assert!(line.contains(" - "));
        let parsed = parse_record(&line).unwrap();
        assert_eq!(parsed, Record::Snapshot(rec));
    }

    #[test]
    fn comm_line_round_trips_and_rebuilds_layers() {
        let comm = CommRecord {
            id: CommunicatorId(5),
            algorithm: Algorithm::Tree,
            members: (0..7).map(RankId).collect(),
        };
        let line = Record::Comm(comm.clone()).to_string();
        let parsed = parse_record(&line).unwrap();
        assert_eq!(parsed, Record::Comm(comm.clone()));
        let rebuilt = comm.to_communicator().unwrap();
        assert_eq!(rebuilt.layer(RankId(0)), Some(0));
        assert_eq!(rebuilt.layer(RankId(6)), Some(2));
    }

    #[test]
    fn schema_mismatch_is_explicit() {
        let rec = snapshot(0, 0, SnapshotReason::Completion, 10);
        let line = Record::Snapshot(rec).to_string();
        let bumped = format!("2{}", &line[1..]);
        assert!(matches!(
            parse_record(&bumped),
            Err(Error::SchemaMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn duplicate_heartbeats_keep_the_latest() {
        let mut c = Collector::new();
        for rank in 0..4 {
            c.ingest(Record::Snapshot(snapshot(
                rank,
                3,
                SnapshotReason::Completion,
                1_000,
            )));
        }
        assert_eq!(c.len(), 4);
        c.ingest(Record::Snapshot(snapshot(2, 9, SnapshotReason::Heartbeat, 50)));
        c.ingest(Record::Snapshot(snapshot(2, 9, SnapshotReason::Heartbeat, 60)));
        assert_eq!(c.len(), 5);
        let kept = c.query(CommunicatorId(7), 9, 9);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].snapshot.duration_us, 60);
    }

    #[test]
    fn truncated_line_counts_a_parse_error_and_continues() {
        let mut c = Collector::new();
        c.ingest_line("1 0 7 0 completion 100");
        assert_eq!(c.parse_errors(), 1);
        c.ingest_line(&Record::Snapshot(snapshot(0, 0, SnapshotReason::Completion, 9)).to_string());
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn persist_then_load_reproduces_the_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.txt");
        let mut c = Collector::new();
        c.ingest(Record::Comm(CommRecord {
            id: CommunicatorId(7),
            algorithm: Algorithm::Ring,
            members: (0..4).map(RankId).collect(),
        }));
        for rank in 0..4 {
            c.ingest(Record::Snapshot(snapshot(
                rank,
                0,
                SnapshotReason::Completion,
                2_000,
            )));
        }
        let written = c.persist(&path).unwrap();
        assert_eq!(written, 5);
        let loaded = Collector::load(&path).unwrap();
        assert_eq!(loaded, c.records());
    }

    #[test]
    fn load_of_empty_store_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        assert!(Collector::load(&path).unwrap().is_empty());
    }

    #[test]
    fn query_by_round_range() {
        let mut c = Collector::new();
        for round in 0..10 {
            for rank in 0..3 {
                c.ingest(Record::Snapshot(snapshot(
                    rank,
                    round,
                    SnapshotReason::Completion,
                    1_000,
                )));
            }
        }
        assert_eq!(c.query(CommunicatorId(7), 3, 5).len(), 9);
        assert!(c.query(CommunicatorId(99), 0, 100).is_empty());
        assert_eq!(c.query(CommunicatorId(7), 0, u64::MAX).len(), 30);
    }
}
