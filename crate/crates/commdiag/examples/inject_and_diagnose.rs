//! Run all six bundled anomaly scenarios end to end and print the verdict
//! for each: anomaly class, root-cause ranks, and detection latency in
//! simulated time.
//!
//! ```bash
//! cargo run -p commdiag --example inject_and_diagnose
//! ```

use commdiag::pipeline::{run_scenario, RunOptions};
use commdiag::sim::Scenario;

fn main() {
    let scenarios = [
        "h1_not_entered",
        "h2_inconsistent",
        "h3_hardware",
        "s1_comp_slow",
        "s2_comm_slow",
        "s3_mixed_slow",
    ];
    for name in scenarios {
        let path = format!("{}/scenarios/{name}.scn", env!("CARGO_MANIFEST_DIR"));
        let text = std::fs::read_to_string(&path).expect("bundled scenario exists");
        let scenario = Scenario::parse(name, &text).expect("bundled scenario parses");
        let run = run_scenario(&scenario, &RunOptions::default()).expect("scenario runs");

        println!("{name}:");
        for (i, report) in run.summary.reports.iter().enumerate() {
            let latency = run.summary.detection_latency_us[i]
                .map(|us| format!("{:.1} s after the fault", us as f64 / 1e6))
                .unwrap_or_else(|| "-".into());
            println!("  {report}");
            println!("  detected {latency}");
        }
        println!(
            "  expectations {}\n",
            if run.summary.passed { "met" } else { "NOT met" }
        );
        assert!(run.summary.passed);
    }
}
