//! Persist a run's snapshot stream and re-diagnose it offline: the replay
//! produces the identical report stream.
//!
//! ```bash
//! cargo run -p commdiag --example replay_trace
//! ```

use commdiag::analyzer::{diagnose, AnalyzerConfig};
use commdiag::collector::Collector;
use commdiag::pipeline::{run_scenario, RunOptions};
use commdiag::sim::Scenario;

fn main() {
    let path = format!(
        "{}/scenarios/h1_not_entered.scn",
        env!("CARGO_MANIFEST_DIR")
    );
    let text = std::fs::read_to_string(&path).unwrap();
    let scenario = Scenario::parse("h1_not_entered", &text).unwrap();
    let run = run_scenario(&scenario, &RunOptions::default()).unwrap();
    println!("live run produced {} record(s):", run.summary.reports.len());
    for report in &run.summary.reports {
        println!("  {report}");
    }

    // Persist the collector stream next to the system temp dir and read it
    // back like an operator would after the fact.
    let mut collector = Collector::new();
    for record in run.records.iter().cloned() {
        collector.ingest(record);
    }
    let trace_path = std::env::temp_dir().join("commdiag_replay_example.trace");
    let written = collector.persist(&trace_path).unwrap();
    println!("\npersisted {written} records to {}", trace_path.display());

    let loaded = Collector::load(&trace_path).unwrap();
    let replayed = diagnose(&loaded, &AnalyzerConfig::default()).unwrap();
    println!("replay produced {} record(s):", replayed.len());
    for report in &replayed {
        println!("  {report}");
    }
    assert_eq!(replayed, run.summary.reports);
    println!("\nreplay matches the live run, report for report");

    let _ = std::fs::remove_file(&trace_path);
}
