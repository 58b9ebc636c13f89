//! Centralized decision analysis: grouping, detection, and root-cause
//! location over the snapshot stream.

pub mod baseline;
pub mod config;
pub mod detect;
pub mod engine;
pub mod locate;
pub mod report;

pub use baseline::{BaselineSource, BaselineState};
pub use config::AnalyzerConfig;
pub use detect::{
    detect_hang, detect_slow, estimate_theta, select_extreme_round, slow_ratio, HangAlert,
    InFlightView, RoundDurations, SlowCounter, SlowDetection,
};
pub use engine::{diagnose, Analyzer};
pub use locate::{
    comparison_groups, locate_hang, locate_slow, p_ratio, HangContext, HangRankState,
    SlowContext, SlowRankState,
};
pub use report::{AnomalyKind, AnomalyReport, RankEvidence};
