//! Cluster configuration.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::trace::MAX_CHANNELS;

/// Static description of the simulated cluster.
#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub num_ranks: u32,
    /// Parallel transfer lanes per rank, 1..=8.
    pub channels_per_rank: u32,
    /// Default link bandwidth for every (rank, channel), bytes per
    /// simulated microsecond.
    pub bandwidth_bytes_per_us: f64,
    /// Per-(rank, channel) bandwidth overrides.
    pub bandwidth_overrides: BTreeMap<(u32, u32), f64>,
    /// Constant propagation latency per hop.
    pub base_latency_us: u64,
    /// Transport buffer depth: units a sender may have in flight toward
    /// one peer on one channel before that peer's kernel consumes them.
    /// A full buffer blocks the sender, so one slow consumer
    /// backpressures its whole dependency chain.
    pub edge_budget_units: u64,
    /// Seed for deterministic per-(round, rank) entry jitter.
    pub seed: u64,
    /// Upper bound of the random entry jitter added to each rank's entry.
    pub entry_jitter_us: u64,
    /// Initial frame mode flag: whether kernel counters are recorded.
    pub measurement_enabled: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            num_ranks: 2,
            channels_per_rank: 1,
            bandwidth_bytes_per_us: 4096.0,
            bandwidth_overrides: BTreeMap::new(),
            base_latency_us: 5,
            edge_budget_units: 2,
            seed: 0,
            entry_jitter_us: 0,
            measurement_enabled: true,
        }
    }
}

impl ClusterConfig {
    pub fn new(num_ranks: u32, channels_per_rank: u32, seed: u64) -> Self {
        ClusterConfig {
            num_ranks,
            channels_per_rank,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ranks == 0 {
            return Err(Error::InvalidConfiguration(
                "num_ranks must be positive".into(),
            ));
        }
        if self.channels_per_rank == 0 || self.channels_per_rank > MAX_CHANNELS as u32 {
            return Err(Error::InvalidConfiguration(format!(
                "channels_per_rank must be in 1..={MAX_CHANNELS}"
            )));
        }
        if self.bandwidth_bytes_per_us.is_nan() || self.bandwidth_bytes_per_us <= 0.0 {
            return Err(Error::InvalidConfiguration(
                "bandwidth must be positive".into(),
            ));
        }
        if self.edge_budget_units == 0 {
            return Err(Error::InvalidConfiguration(
                "edge_budget_units must be positive".into(),
            ));
        }
        for (&(rank, channel), &bw) in &self.bandwidth_overrides {
            if rank >= self.num_ranks || channel >= self.channels_per_rank {
                return Err(Error::InvalidConfiguration(format!(
                    "bandwidth override for unknown (rank {rank}, channel {channel})"
                )));
            }
            if bw.is_nan() || bw <= 0.0 {
                return Err(Error::InvalidConfiguration(
                    "bandwidth override must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn bandwidth(&self, rank: u32, channel: u32) -> f64 {
        self.bandwidth_overrides
            .get(&(rank, channel))
            .copied()
            .unwrap_or(self.bandwidth_bytes_per_us)
    }
}
