//! Deterministic fault injection: the six anomaly classes.

use crate::error::{Error, Result};
use crate::trace::{CommunicatorId, OperationDescriptor, RankId};

/// Root-cause class of an injected anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    /// The victim misses the collective entirely: its operation counter
    /// never advances and peers block on it.
    NotEnteredHang,
    /// The victim posts a conflicting operation descriptor, runs it to
    /// completion on its own, and leaves peers wedged.
    InconsistentHang,
    /// The victim's kernel dies mid-round: send and recv instructions stop
    /// retiring after a fraction of its plan.
    HardwareFault,
    /// Prolonged pre-communication work delays the victim's entry.
    CompSlow,
    /// The victim's links degrade: outgoing unit service slows by a factor.
    CommSlow,
    /// Entry delay and link degradation combined.
    MixedSlow,
}

impl FaultKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultKind::NotEnteredHang => "not_entered_hang",
            FaultKind::InconsistentHang => "inconsistent_hang",
            FaultKind::HardwareFault => "hardware_fault",
            FaultKind::CompSlow => "comp_slow",
            FaultKind::CommSlow => "comm_slow",
            FaultKind::MixedSlow => "mixed_slow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "not_entered_hang" | "h1" => Some(FaultKind::NotEnteredHang),
            "inconsistent_hang" | "h2" => Some(FaultKind::InconsistentHang),
            "hardware_fault" | "h3" => Some(FaultKind::HardwareFault),
            "comp_slow" | "s1" => Some(FaultKind::CompSlow),
            "comm_slow" | "s2" => Some(FaultKind::CommSlow),
            "mixed_slow" | "s3" => Some(FaultKind::MixedSlow),
            _ => None,
        }
    }
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One injected anomaly: a single victim rank, a trigger round, and
/// kind-specific parameters. Hang faults wedge the communicator at the
/// trigger round; slow faults degrade every round from the trigger onward
/// so detection windows keep observing them.
#[derive(Debug, Clone)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub victim: RankId,
    pub trigger_round: u64,
    /// Restrict to one communicator; `None` applies to any communicator
    /// containing the victim.
    pub comm: Option<CommunicatorId>,
    /// Extra entry latency for `CompSlow` / `MixedSlow`.
    pub entry_delay_us: u64,
    /// Outgoing-bandwidth multiplier in (0, 1) for `CommSlow` / `MixedSlow`.
    pub bandwidth_factor: f64,
    /// Fraction of planned send units retired before the kernel dies, in
    /// [0, 1), for `HardwareFault`.
    pub freeze_after_fraction: f64,
    /// Conflicting descriptor posted by an `InconsistentHang` victim; when
    /// absent the engine substitutes the round's descriptor with its
    /// operation name flipped.
    pub substitute: Option<OperationDescriptor>,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, victim: RankId, trigger_round: u64) -> Self {
        FaultSpec {
            kind,
            victim,
            trigger_round,
            comm: None,
            entry_delay_us: 0,
            bandwidth_factor: 1.0,
            freeze_after_fraction: 0.0,
            substitute: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FaultKind::CompSlow => {
                if self.entry_delay_us == 0 {
                    return Err(Error::InvalidConfiguration(
                        "comp_slow requires entry_delay_us > 0".into(),
                    ));
                }
            }
            FaultKind::CommSlow => {
                if !(self.bandwidth_factor > 0.0 && self.bandwidth_factor < 1.0) {
                    return Err(Error::InvalidConfiguration(
                        "comm_slow requires bandwidth_factor in (0, 1)".into(),
                    ));
                }
            }
            FaultKind::MixedSlow => {
                if self.entry_delay_us == 0
                    || !(self.bandwidth_factor > 0.0 && self.bandwidth_factor < 1.0)
                {
                    return Err(Error::InvalidConfiguration(
                        "mixed_slow requires entry_delay_us > 0 and bandwidth_factor in (0, 1)"
                            .into(),
                    ));
                }
            }
            FaultKind::HardwareFault => {
                if !(0.0..1.0).contains(&self.freeze_after_fraction) {
                    return Err(Error::InvalidConfiguration(
                        "hardware_fault requires freeze_after_fraction in [0, 1)".into(),
                    ));
                }
            }
            FaultKind::NotEnteredHang | FaultKind::InconsistentHang => {}
        }
        Ok(())
    }

    /// Whether this fault targets `(comm, round, rank)`.
    pub fn applies(&self, comm: CommunicatorId, round: u64, rank: RankId) -> bool {
        if rank != self.victim {
            return false;
        }
        if let Some(c) = self.comm {
            if c != comm {
                return false;
            }
        }
        match self.kind {
            // Hang classes fire at the trigger round; the communicator
            // never progresses past it. Not-entered also suppresses any
            // later posting attempt on the victim.
            FaultKind::InconsistentHang | FaultKind::HardwareFault => round == self.trigger_round,
            FaultKind::NotEnteredHang
            | FaultKind::CompSlow
            | FaultKind::CommSlow
            | FaultKind::MixedSlow => round >= self.trigger_round,
        }
    }
}
