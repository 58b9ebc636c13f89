//! Build a scenario script from scratch, run it, and inspect the summary —
//! the same path the `commdiag run` command takes.
//!
//! ```bash
//! cargo run -p commdiag --example scenario_scripting
//! ```

use commdiag::pipeline::{run_scenario, write_summary, RunOptions};
use commdiag::sim::Scenario;

fn main() {
    // Eight ranks; a communication-slow fault throttles rank 5's links to
    // 10% from round 4 onward. Rounds are posted every 30 simulated
    // seconds, and the `expect` line makes the run self-checking.
    let script = "\
cluster 8 1 3 jitter=100
comm 1 ring 0,1,2,3,4,5,6,7
fault s2 5 4 bandwidth_factor=0.1

round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 30000000
round 1 allreduce ring simple 8388608
advance 120000000

expect s2 5
";
    let scenario = Scenario::parse("scripted_s2", script).unwrap();
    println!(
        "parsed: {} steps, {} fault(s), {} expectation(s)\n",
        scenario.steps.len(),
        scenario.faults.len(),
        scenario.expectations.len()
    );

    let run = run_scenario(&scenario, &RunOptions::default()).unwrap();
    print!("{}", write_summary(&run.summary));
    assert!(run.summary.passed);
}
