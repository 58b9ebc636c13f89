//! Analyzer thresholds and windows.

use crate::error::{Error, Result};

/// Detection thresholds, windows, and boundary parameters.
///
/// Defaults follow production practice: a 5-minute hang threshold, a
/// 1-minute slow-detection window, a slowdown threshold near 3, and the
/// boundary parameters `alpha`/`beta` bracketing the mixed-slowdown band
/// around 0.5. `initial_baseline_us` is the administrator's prior for the
/// round duration before enough rounds have been observed to learn one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerConfig {
    pub hang_threshold_us: u64,
    pub slow_window_us: u64,
    pub theta_slow: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Consecutive slow windows required before a slow alert fires.
    pub repetition_threshold: u64,
    pub initial_baseline_us: u64,
    /// Baseline learning stops after this many rounds...
    pub m_rounds_cap: u64,
    /// ...or after this much simulated time, whichever comes first.
    pub m_time_cap_us: u64,
    /// AllReduce at or below this size is a synchronization barrier and is
    /// excluded from detection and baselines.
    pub barrier_size_bytes: u64,
    /// Re-estimate the slowdown threshold statistically once enough clean
    /// windows have been observed.
    pub adaptive_theta: bool,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            hang_threshold_us: 300_000_000,
            slow_window_us: 60_000_000,
            theta_slow: 3.0,
            alpha: 0.4,
            beta: 0.6,
            repetition_threshold: 3,
            initial_baseline_us: 10_000_000,
            m_rounds_cap: 100,
            m_time_cap_us: 120_000_000,
            barrier_size_bytes: 4,
            adaptive_theta: true,
        }
    }
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<()> {
        let boundaries_ordered =
            self.alpha > 0.0 && self.alpha < self.beta && self.beta < 1.0;
        if !boundaries_ordered {
            return Err(Error::InvalidConfiguration(
                "need 0 < alpha < beta < 1".into(),
            ));
        }
        if self.theta_slow.is_nan() || self.theta_slow <= 0.0 {
            return Err(Error::InvalidConfiguration("theta_slow must be > 0".into()));
        }
        if self.hang_threshold_us <= self.slow_window_us {
            return Err(Error::InvalidConfiguration(
                "hang_threshold_us must exceed slow_window_us".into(),
            ));
        }
        if self.slow_window_us == 0 || self.initial_baseline_us == 0 {
            return Err(Error::InvalidConfiguration(
                "windows and baseline must be positive".into(),
            ));
        }
        if self.m_rounds_cap == 0 || self.m_time_cap_us == 0 {
            return Err(Error::InvalidConfiguration(
                "baseline learning caps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Applies a `key=value` override, as accepted on the command line.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidConfiguration(format!("invalid {what} '{value}'"));
        match key {
            "hang_threshold_us" => {
                self.hang_threshold_us = value.parse().map_err(|_| bad(key))?
            }
            "slow_window_us" => self.slow_window_us = value.parse().map_err(|_| bad(key))?,
            "theta_slow" => self.theta_slow = value.parse().map_err(|_| bad(key))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "beta" => self.beta = value.parse().map_err(|_| bad(key))?,
            "repetition_threshold" => {
                self.repetition_threshold = value.parse().map_err(|_| bad(key))?
            }
            "initial_baseline_us" => {
                self.initial_baseline_us = value.parse().map_err(|_| bad(key))?
            }
            "m_rounds_cap" => self.m_rounds_cap = value.parse().map_err(|_| bad(key))?,
            "m_time_cap_us" => self.m_time_cap_us = value.parse().map_err(|_| bad(key))?,
            "barrier_size_bytes" => {
                self.barrier_size_bytes = value.parse().map_err(|_| bad(key))?
            }
            "adaptive_theta" => {
                self.adaptive_theta = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(bad(key)),
                }
            }
            other => {
                return Err(Error::InvalidConfiguration(format!(
                    "unknown analyzer config key '{other}'"
                )))
            }
        }
        self.validate()
    }
}
