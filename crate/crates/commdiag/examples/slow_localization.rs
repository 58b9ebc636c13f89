//! How the contribution ratio P splits a slowdown between computation and
//! communication, and how it assigns the root cause.
//!
//! `P = (T_max - T_min) / (T_max - T_base)`. A late entrant runs a
//! normal-length round of its own, so the round minimum hugs the baseline
//! and P approaches 1 (computation-slow). A throttled link stretches every
//! rank's round together, so the minimum chases the maximum and P falls
//! toward 0 (communication-slow). The middle band is a mixed slowdown.
//!
//! ```bash
//! cargo run -p commdiag --example slow_localization
//! ```

use commdiag::pipeline::{run_scenario, RunOptions};
use commdiag::sim::Scenario;

fn main() {
    for name in ["s1_comp_slow", "s2_comm_slow", "s3_mixed_slow"] {
        let path = format!("{}/scenarios/{name}.scn", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).unwrap();
        let scenario = Scenario::parse(name, &text).unwrap();
        let run = run_scenario(&scenario, &RunOptions::default()).unwrap();
        let report = &run.summary.reports[0];

        println!("{name}:");
        println!(
            "  T_base = {:.3} ms   T_max = {:.3} ms   T_min = {:.3} ms",
            report.t_base_us.unwrap() / 1e3,
            report.t_max_us.unwrap() as f64 / 1e3,
            report.t_min_us.unwrap() as f64 / 1e3,
        );
        println!(
            "  slowdown R = {:.1}   contribution P = {:.3}  ->  {}",
            report.ratio.unwrap(),
            report.p.unwrap(),
            report.kind,
        );
        // Show the duration and rate evidence the argmin ran over.
        let mut rows = report.per_rank.clone();
        rows.sort_by_key(|e| e.duration_us);
        println!("  shortest rounds:");
        for e in rows.iter().take(2) {
            println!(
                "    rank {:>2}  duration {:>10} us  min rate {}",
                e.rank,
                e.duration_us.unwrap(),
                e.min_rate.map(|r| r.to_string()).unwrap_or_else(|| "-".into()),
            );
        }
        println!("  root cause rank(s): {:?}\n", report.root_cause_ranks);
        assert!(run.summary.passed);
    }
}
