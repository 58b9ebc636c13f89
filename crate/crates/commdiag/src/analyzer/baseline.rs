//! Reference round duration: configured first, then learned.

use crate::analyzer::config::AnalyzerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSource {
    Configured,
    Learned,
}

/// The baseline duration `T_base` a round is judged against.
///
/// While the round count `r` stays at or below the learning horizon `m`,
/// the configured value serves and each round's maximum duration is
/// accumulated. The first round past the horizon switches the value to the
/// mean of the accumulated maxima, after which it stays frozen — a drifting
/// baseline would slowly absorb the very degradation it is supposed to
/// expose. `m` resolves to the smaller of the round cap and however many
/// rounds completed within the time cap.
#[derive(Debug, Clone)]
pub struct BaselineState {
    value_us: f64,
    source: BaselineSource,
    round_maxima: Vec<u64>,
    resolved_m: Option<u64>,
    rounds_cap: u64,
    time_cap_us: u64,
    last_round_index: Option<u64>,
}

impl BaselineState {
    pub fn new(config: &AnalyzerConfig) -> Self {
        BaselineState {
            value_us: config.initial_baseline_us as f64,
            source: BaselineSource::Configured,
            round_maxima: Vec::new(),
            resolved_m: None,
            rounds_cap: config.m_rounds_cap,
            time_cap_us: config.m_time_cap_us,
            last_round_index: None,
        }
    }

    pub fn value_us(&self) -> f64 {
        self.value_us
    }

    pub fn source(&self) -> BaselineSource {
        self.source
    }

    /// The resolved learning horizon, once known.
    pub fn m(&self) -> Option<u64> {
        self.resolved_m
    }

    /// Feeds round `round_index` (a 1-based completion sequence) with the
    /// maximum duration observed across its ranks. Rounds must arrive in
    /// order.
    pub fn update(
        &mut self,
        round_index: u64,
        completed_at_us: u64,
        t_max_us: u64,
    ) -> Result<()> {
        if let Some(prev) = self.last_round_index {
            if round_index <= prev {
                return Err(Error::OutOfOrderRound {
                    prev,
                    got: round_index,
                });
            }
        }
        self.last_round_index = Some(round_index);

        if self.source == BaselineSource::Learned {
            return Ok(());
        }
        if self.resolved_m.is_none() {
            if completed_at_us <= self.time_cap_us
                && (self.round_maxima.len() as u64) < self.rounds_cap
            {
                self.round_maxima.push(t_max_us);
                if self.round_maxima.len() as u64 == self.rounds_cap {
                    self.resolved_m = Some(self.rounds_cap);
                }
                return Ok(());
            }
            // This round falls outside the learning window; the horizon is
            // whatever accumulated before it.
            self.resolved_m = Some(self.round_maxima.len() as u64);
        }
        let m = self.resolved_m.unwrap();
        if m > 0 && round_index > m {
            let sum: u128 = self.round_maxima.iter().map(|&v| v as u128).sum();
            self.value_us = sum as f64 / m as f64;
            self.source = BaselineSource::Learned;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m_rounds: u64) -> AnalyzerConfig {
        AnalyzerConfig {
            initial_baseline_us: 10_000_000,
            m_rounds_cap: m_rounds,
            m_time_cap_us: 120_000_000,
            ..Default::default()
        }
    }

    #[test]
    fn configured_until_past_horizon_then_mean_of_constants() {
        let mut b = BaselineState::new(&config(3));
        for r in 1..=3 {
            assert_eq!(b.value_us(), 10_000_000.0);
            b.update(r, r * 1_000_000, 8_000_000).unwrap();
        }
        assert_eq!(b.source(), BaselineSource::Configured);
        b.update(4, 4_000_000, 50_000_000).unwrap();
        assert_eq!(b.source(), BaselineSource::Learned);
        assert_eq!(b.value_us(), 8_000_000.0);
    }

    #[test]
    fn learned_value_is_arithmetic_mean_of_maxima() {
        let mut b = BaselineState::new(&config(3));
        for (r, max) in [(1, 6_000_000), (2, 10_000_000), (3, 8_000_000)] {
            b.update(r, r * 10, max).unwrap();
        }
        b.update(4, 40, 9_000_000).unwrap();
        assert_eq!(b.value_us(), 8_000_000.0);
        // Frozen after learning: later rounds do not move it.
        b.update(5, 50, 90_000_000).unwrap();
        assert_eq!(b.value_us(), 8_000_000.0);
    }

    #[test]
    fn horizon_resolves_at_the_time_cap() {
        // Only two rounds complete inside the 2-minute window; the third
        // falls outside and triggers learning over those two.
        let mut b = BaselineState::new(&config(100));
        b.update(1, 50_000_000, 5_000_000).unwrap();
        b.update(2, 110_000_000, 7_000_000).unwrap();
        b.update(3, 130_000_000, 6_000_000).unwrap();
        assert_eq!(b.m(), Some(2));
        assert_eq!(b.source(), BaselineSource::Learned);
        assert_eq!(b.value_us(), 6_000_000.0);
    }

    #[test]
    fn no_rounds_in_window_keeps_configured_forever() {
        let mut b = BaselineState::new(&config(100));
        b.update(1, 500_000_000, 5_000_000).unwrap();
        b.update(2, 600_000_000, 5_000_000).unwrap();
        assert_eq!(b.m(), Some(0));
        assert_eq!(b.source(), BaselineSource::Configured);
        assert_eq!(b.value_us(), 10_000_000.0);
    }

    #[test]
    fn out_of_order_round_is_rejected() {
        let mut b = BaselineState::new(&config(3));
        b.update(2, 10, 1).unwrap();
        assert!(matches!(
            b.update(1, 20, 1),
            Err(Error::OutOfOrderRound { prev: 2, got: 1 })
        ));
    }
}
