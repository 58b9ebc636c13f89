//! Anomaly detection: extreme-round selection, slowdown ratios, hang
//! timeouts, and the statistical slowdown threshold.

use crate::analyzer::baseline::BaselineState;
use crate::analyzer::config::AnalyzerConfig;
use crate::error::{Error, Result};
use crate::trace::{OperationDescriptor, RankId, TraceId};

/// Per-round duration spread across the ranks that ran it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundDurations {
    pub round: u64,
    pub t_max_us: u64,
    pub t_min_us: u64,
}

/// Picks the round with the widest intra-round duration range — the most
/// pronounced inter-rank disparity — rather than the largest absolute
/// duration. Ties break toward the earliest round.
pub fn select_extreme_round(window: &[RoundDurations]) -> Result<RoundDurations> {
    let mut best: Option<RoundDurations> = None;
    for r in window {
        let range = r.t_max_us - r.t_min_us;
        let better = match best {
            None => true,
            Some(b) => {
                let best_range = b.t_max_us - b.t_min_us;
                range > best_range || (range == best_range && r.round < b.round)
            }
        };
        if better {
            best = Some(*r);
        }
    }
    best.ok_or_else(|| Error::InsufficientData("no rounds in detection window".into()))
}

/// Slowdown ratio of a round against the baseline:
/// `(t_max - t_base) / t_base`. Negative when the round beat the baseline.
pub fn slow_ratio(t_max_us: u64, t_base_us: f64) -> Result<f64> {
    if t_base_us.is_nan() || t_base_us <= 0.0 {
        return Err(Error::InvalidBaseline(format!(
            "baseline must be positive, got {t_base_us}"
        )));
    }
    Ok((t_max_us as f64 - t_base_us) / t_base_us)
}

/// Counter of successive slow windows; transient jitter resets it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlowCounter {
    count: u64,
}

impl SlowCounter {
    pub fn increment(&mut self) -> u64 {
        self.count += 1;
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// One rank's view of a round still in flight at evaluation time.
#[derive(Debug, Clone, Copy)]
pub struct InFlightView {
    pub rank: RankId,
    pub round: u64,
    pub trace_id: TraceId,
    pub descriptor: OperationDescriptor,
    pub enter_us: u64,
}

/// A round some rank has been stuck in past the hang threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HangAlert {
    pub round: u64,
    pub trace_id: TraceId,
    /// Ranks whose elapsed time crossed the threshold.
    pub stalled_ranks: Vec<RankId>,
}

/// Flags the oldest round in which any rank's elapsed time exceeds the
/// hang threshold. Barrier rounds (tiny AllReduce used purely for
/// synchronization) are filtered out: long waits on them are routine.
pub fn detect_hang(
    in_flight: &[InFlightView],
    now_us: u64,
    config: &AnalyzerConfig,
) -> Option<HangAlert> {
    let mut alert: Option<HangAlert> = None;
    for view in in_flight {
        if is_barrier(&view.descriptor, config) {
            continue;
        }
        if now_us.saturating_sub(view.enter_us) <= config.hang_threshold_us {
            continue;
        }
        match &mut alert {
            Some(a) if a.round == view.round => a.stalled_ranks.push(view.rank),
            Some(a) if view.round < a.round => {
                *a = HangAlert {
                    round: view.round,
                    trace_id: view.trace_id,
                    stalled_ranks: vec![view.rank],
                }
            }
            Some(_) => {}
            None => {
                alert = Some(HangAlert {
                    round: view.round,
                    trace_id: view.trace_id,
                    stalled_ranks: vec![view.rank],
                })
            }
        }
    }
    alert
}

pub fn is_barrier(descriptor: &OperationDescriptor, config: &AnalyzerConfig) -> bool {
    descriptor.op_name == crate::trace::OpKind::AllReduce
        && descriptor.data_size_bytes <= config.barrier_size_bytes
}

/// Outcome of one slow-detection window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowDetection {
    pub round: u64,
    pub t_max_us: u64,
    pub t_min_us: u64,
    pub ratio: f64,
    /// Set once the repetition threshold is exceeded.
    pub alert: bool,
}

/// Evaluates one detection window of completed, non-barrier rounds.
///
/// The extreme round's slowdown ratio is compared against `theta`
/// (strictly): a slow window bumps the repetition counter, a clean one
/// resets it, and the alert fires only when the counter exceeds the
/// threshold — transient cluster jitter is ignored unless it recurs.
/// An empty window is a skipped cycle and leaves the counter untouched.
pub fn detect_slow(
    window: &[RoundDurations],
    baseline: &BaselineState,
    counter: &mut SlowCounter,
    theta: f64,
    config: &AnalyzerConfig,
) -> Result<Option<SlowDetection>> {
    let extreme = match select_extreme_round(window) {
        Ok(e) => e,
        Err(Error::InsufficientData(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let ratio = slow_ratio(extreme.t_max_us, baseline.value_us())?;
    let alert = if ratio > theta {
        counter.increment() > config.repetition_threshold
    } else {
        counter.reset();
        false
    };
    Ok(Some(SlowDetection {
        round: extreme.round,
        t_max_us: extreme.t_max_us,
        t_min_us: extreme.t_min_us,
        ratio,
        alert,
    }))
}

/// Statistical slowdown threshold from fault-free window ratios:
/// `mean + 3 * stddev`, floored at 1 and capped at 10.
pub fn estimate_theta(history: &[f64]) -> Result<f64> {
    if history.len() < 30 {
        return Err(Error::InsufficientData(format!(
            "theta estimation needs >= 30 ratios, got {}",
            history.len()
        )));
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean + 3.0 * var.sqrt()).clamp(1.0, 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Algorithm, CommunicatorId, OpKind, Protocol};

    #[test]
    fn widest_range_wins_over_largest_maximum() {
        // Round A spans (10, 40); round B has the larger absolute maximum
        // but a narrow (45, 50) spread. A is the suspicious one.
        let window = vec![
            RoundDurations {
                round: 1,
                t_max_us: 40,
                t_min_us: 10,
            },
            RoundDurations {
                round: 2,
                t_max_us: 50,
                t_min_us: 45,
            },
        ];
        assert_eq!(select_extreme_round(&window).unwrap().round, 1);
    }

    #[test]
    fn single_round_and_tie_breaks() {
        let single = vec![RoundDurations {
            round: 7,
            t_max_us: 5,
            t_min_us: 5,
        }];
        assert_eq!(select_extreme_round(&single).unwrap().round, 7);
        let tied = vec![
            RoundDurations {
                round: 4,
                t_max_us: 30,
                t_min_us: 20,
            },
            RoundDurations {
                round: 2,
                t_max_us: 90,
                t_min_us: 80,
            },
        ];
        // Equal ranges: the earliest round is selected.
        assert_eq!(select_extreme_round(&tied).unwrap().round, 2);
        assert!(select_extreme_round(&[]).is_err());
    }

    #[test]
    fn slow_ratio_arithmetic() {
        assert_eq!(slow_ratio(40_000_000, 10_000_000.0).unwrap(), 3.0);
        assert_eq!(slow_ratio(10_000_000, 10_000_000.0).unwrap(), 0.0);
        assert_eq!(slow_ratio(50_000_000, 10_000_000.0).unwrap(), 4.0);
        assert!(matches!(
            slow_ratio(10, 0.0),
            Err(Error::InvalidBaseline(_))
        ));
    }

    fn desc(bytes: u64) -> OperationDescriptor {
        OperationDescriptor {
            op_name: OpKind::AllReduce,
            algorithm: Algorithm::Ring,
            protocol: Protocol::Simple,
            data_size_bytes: bytes,
        }
    }

    fn view(rank: u32, round: u64, enter_us: u64, bytes: u64) -> InFlightView {
        InFlightView {
            rank: RankId(rank),
            round,
            trace_id: crate::trace::make_trace_id(CommunicatorId(1), round, 0),
            descriptor: desc(bytes),
            enter_us,
        }
    }

    #[test]
    fn hang_fires_past_threshold_but_not_for_barriers() {
        let config = AnalyzerConfig::default();
        // 301 s stalled: over the 5-minute threshold.
        let views = vec![view(0, 5, 0, 1 << 20), view(1, 5, 500, 1 << 20)];
        let alert = detect_hang(&views, 301_000_000, &config).unwrap();
        assert_eq!(alert.round, 5);
        assert_eq!(alert.stalled_ranks, vec![RankId(0), RankId(1)]);
        // A 4-byte barrier stalled for 400 s stays silent.
        let barrier = vec![view(0, 5, 0, 4)];
        assert!(detect_hang(&barrier, 400_000_000, &config).is_none());
        // Under threshold: silent.
        assert!(detect_hang(&views, 250_000_000, &config).is_none());
    }

    #[test]
    fn hang_picks_the_oldest_stalled_round() {
        let config = AnalyzerConfig::default();
        let views = vec![view(0, 9, 1_000, 1 << 20), view(1, 7, 2_000, 1 << 20)];
        let alert = detect_hang(&views, 400_000_000, &config).unwrap();
        assert_eq!(alert.round, 7);
    }

    fn baseline_10s() -> BaselineState {
        BaselineState::new(&AnalyzerConfig {
            initial_baseline_us: 10_000_000,
            ..Default::default()
        })
    }

    #[test]
    fn repetition_threshold_gates_the_alert() {
        let config = AnalyzerConfig::default();
        let baseline = baseline_10s();
        let mut counter = SlowCounter::default();
        let slow_window = vec![RoundDurations {
            round: 1,
            t_max_us: 45_000_000,
            t_min_us: 44_000_000,
        }];
        // Three slow windows arm the counter; the fourth alerts.
        for i in 0..3 {
            let det = detect_slow(&slow_window, &baseline, &mut counter, 3.0, &config)
                .unwrap()
                .unwrap();
            assert!(!det.alert, "window {i} must not alert yet");
        }
        let det = detect_slow(&slow_window, &baseline, &mut counter, 3.0, &config)
            .unwrap()
            .unwrap();
        assert!(det.alert);
        assert_eq!(det.ratio, 3.5);
    }

    #[test]
    fn clean_window_resets_the_counter() {
        let config = AnalyzerConfig::default();
        let baseline = baseline_10s();
        let mut counter = SlowCounter::default();
        let slow = vec![RoundDurations {
            round: 1,
            t_max_us: 45_000_000,
            t_min_us: 40_000_000,
        }];
        let clean = vec![RoundDurations {
            round: 2,
            t_max_us: 11_000_000,
            t_min_us: 10_000_000,
        }];
        detect_slow(&slow, &baseline, &mut counter, 3.0, &config).unwrap();
        assert_eq!(counter.count(), 1);
        detect_slow(&clean, &baseline, &mut counter, 3.0, &config).unwrap();
        assert_eq!(counter.count(), 0);
        // Empty window: skipped cycle, counter untouched.
        detect_slow(&slow, &baseline, &mut counter, 3.0, &config).unwrap();
        assert!(detect_slow(&[], &baseline, &mut counter, 3.0, &config)
            .unwrap()
            .is_none());
        assert_eq!(counter.count(), 1);
    }

    #[test]
    fn ratio_exactly_at_theta_never_alerts() {
        // R == theta is not strictly greater; the counter never moves.
        let config = AnalyzerConfig::default();
        let baseline = baseline_10s();
        let mut counter = SlowCounter::default();
        let window = vec![RoundDurations {
            round: 1,
            t_max_us: 40_000_000,
            t_min_us: 39_000_000,
        }];
        for _ in 0..10 {
            let det = detect_slow(&window, &baseline, &mut counter, 3.0, &config)
                .unwrap()
                .unwrap();
            assert_eq!(det.ratio, 3.0);
            assert!(!det.alert);
        }
        assert_eq!(counter.count(), 0);
    }

    #[test]
    fn theta_estimation_floors_caps_and_matches_statistics() {
        assert!(matches!(
            estimate_theta(&[0.0; 29]),
            Err(Error::InsufficientData(_))
        ));
        // Degenerate variance: floored to 1.
        assert_eq!(estimate_theta(&[0.0; 30]).unwrap(), 1.0);
        // Small mean and spread: still floored to 1.
        let tight: Vec<f64> = (0..40).map(|i| 0.2 + 0.05 * ((i % 3) as f64 - 1.0)).collect();
        assert_eq!(estimate_theta(&tight).unwrap(), 1.0);
        // Mean 1.5, stddev 0.5 -> 3.0, the practical operating point.
        let history: Vec<f64> = (0..30)
            .map(|i| if i % 2 == 0 { 1.0 } else { 2.0 })
            .collect();
        assert!((estimate_theta(&history).unwrap() - 3.0).abs() < 1e-12);
        // Wild history is capped at 10.
        let wild: Vec<f64> = (0..30).map(|i| (i % 7) as f64 * 5.0).collect();
        assert_eq!(estimate_theta(&wild).unwrap(), 10.0);
    }
}
