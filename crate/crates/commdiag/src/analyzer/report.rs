//! Analyzer verdicts.

use std::fmt;

use crate::trace::{CommunicatorId, OperationDescriptor, RankId, Rate};

/// The diagnosed anomaly class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    /// Some ranks never entered the collective.
    H1NotEntered,
    /// Conflicting operations within the communicator; the non-hung ranks
    /// ran something else.
    H2Inconsistent,
    /// All ranks hung; the least-progressed rank points at dead hardware.
    H3HardwareFault,
    /// Slow computation delayed entry into communication.
    S1CompSlow,
    /// Degraded links slowed the communication itself.
    S2CommSlow,
    /// Both contributions, neither dominant.
    S3MixedSlow,
}

impl AnomalyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyKind::H1NotEntered => "H1",
            AnomalyKind::H2Inconsistent => "H2",
            AnomalyKind::H3HardwareFault => "H3",
            AnomalyKind::S1CompSlow => "S1_comp",
            AnomalyKind::S2CommSlow => "S2_comm",
            AnomalyKind::S3MixedSlow => "S3_mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "H1" => Some(AnomalyKind::H1NotEntered),
            "H2" => Some(AnomalyKind::H2Inconsistent),
            "H3" => Some(AnomalyKind::H3HardwareFault),
            "S1_comp" => Some(AnomalyKind::S1CompSlow),
            "S2_comm" => Some(AnomalyKind::S2CommSlow),
            "S3_mixed" => Some(AnomalyKind::S3MixedSlow),
            _ => None,
        }
    }

    pub fn is_hang(&self) -> bool {
        matches!(
            self,
            AnomalyKind::H1NotEntered | AnomalyKind::H2Inconsistent | AnomalyKind::H3HardwareFault
        )
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-rank measurements backing a verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankEvidence {
    pub rank: RankId,
    /// Duration of the implicated round, when the rank ran it.
    pub duration_us: Option<u64>,
    /// Send plus recv counters summed over channels.
    pub total_count: u64,
    /// Worst progress rate across directions and channels.
    pub min_rate: Option<Rate>,
    /// Highest round the rank is known to have posted.
    pub latest_round: Option<u64>,
    pub completed: bool,
    pub descriptor: Option<OperationDescriptor>,
}

/// A located anomaly: class, root-cause ranks, and enough evidence to
/// re-derive the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub kind: AnomalyKind,
    pub comm: CommunicatorId,
    pub round: u64,
    pub root_cause_ranks: Vec<RankId>,
    pub detected_at_us: u64,
    pub located_at_us: u64,
    /// Baseline, extreme-round maximum/minimum, slowdown ratio and
    /// contribution ratio — set for slow verdicts.
    pub t_base_us: Option<f64>,
    pub t_max_us: Option<u64>,
    pub t_min_us: Option<u64>,
    pub ratio: Option<f64>,
    pub p: Option<f64>,
    /// Slow verdicts: whether the baseline was still the configured value
    /// (a slow-at-start scenario) rather than a learned one.
    pub slow_at_start: Option<bool>,
    pub per_rank: Vec<RankEvidence>,
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "-".into(),
    }
}

impl fmt::Display for AnomalyReport {
    /// One machine-parseable record per report with stable key names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let roots = self
            .root_cause_ranks
            .iter()
            .map(|r| r.0.to_string())
            .collect::<Vec<_>>()
            .join(",");
        write!(
            f,
            "kind={} comm={} round={} roots={} R={} P={} T_base={} T_max={} T_min={} \
             detected_at={} located_at={}",
            self.kind,
            self.comm,
            self.round,
            roots,
            fmt_opt(&self.ratio),
            fmt_opt(&self.p),
            fmt_opt(&self.t_base_us),
            fmt_opt(&self.t_max_us),
            fmt_opt(&self.t_min_us),
            self.detected_at_us,
            self.located_at_us,
        )
    }
}
