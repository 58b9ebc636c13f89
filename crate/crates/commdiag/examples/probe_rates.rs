//! How counter-change rates expose a degraded transfer without any clock
//! synchronization.
//!
//! The probe samples each send/recv counter every millisecond and counts
//! value *changes*. A healthy transfer bundles many units into few sampling
//! intervals; a throttled one spreads the same units across many. The rate
//! is the reciprocal of the change count.
//!
//! ```bash
//! cargo run -p commdiag --example probe_rates
//! ```

use commdiag::probe::RateAccumulator;
use commdiag::trace::Rate;

fn main() {
    // Normal link: eight send units complete within two sampled intervals.
    // The sampler sees 0 -> 4 -> 4 -> 8: two changes, rate 1/2.
    let mut normal = RateAccumulator::new(1_000);
    for value in [4u64, 4, 8] {
        normal.sample(value);
    }
    let normal_rate = normal.current_rate().unwrap();
    println!("normal link : counter 0,4,4,8   -> {} change(s), rate {normal_rate}", normal.change_count());
    assert_eq!(normal_rate, Rate::new(1, 2));

    // Degraded link: the same eight units trickle in one per interval.
    // Seven changes, rate 1/7 — visibly slower with no timestamps at all.
    let mut slow = RateAccumulator::new(1_000);
    for value in 1..=7u64 {
        slow.sample(value);
    }
    let slow_rate = slow.current_rate().unwrap();
    println!("slow link   : counter 1..7      -> {} change(s), rate {slow_rate}", slow.change_count());
    assert_eq!(slow_rate, Rate::new(1, 7));

    // A counter that stops moving entirely reports the stalled sentinel 0,
    // which sorts below every genuine rate when locating a root cause.
    let mut stalled = RateAccumulator::new(4);
    for _ in 0..4 {
        stalled.sample(42);
    }
    stalled.sample(42);
    println!(
        "stalled link: constant counter   -> {} change(s), rate {}",
        stalled.change_count(),
        stalled.current_rate().unwrap()
    );
    assert_eq!(stalled.current_rate().unwrap(), Rate::new(0, 1));
}
