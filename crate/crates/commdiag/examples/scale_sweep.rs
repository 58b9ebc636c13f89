//! Root-cause location cost versus communicator size.
//!
//! Location only compares metrics across members, so its cost grows
//! linearly with rank count; even a 4,096-rank communicator locates in
//! well under a second.
//!
//! ```bash
//! cargo run -p commdiag --example scale_sweep
//! ```

use std::time::Instant;

use commdiag::analyzer::{locate_hang, HangContext, HangRankState};
use commdiag::trace::{Algorithm, CommunicatorId, OpKind, OperationDescriptor, Protocol, RankId};

fn hang_ctx(n: u32) -> HangContext {
    let descriptor = OperationDescriptor::new(
        OpKind::AllReduce,
        Algorithm::Ring,
        Protocol::Simple,
        1 << 24,
    )
    .unwrap();
    HangContext {
        comm: CommunicatorId(1),
        round: 3,
        groups: vec![(0..n).map(RankId).collect()],
        ranks: (0..n)
            .map(|r| HangRankState {
                rank: RankId(r),
                latest_round: Some(3),
                completed: false,
                descriptor: Some(descriptor),
                total_count: if r == 1 { 9 } else { 40 + (r as u64 % 11) },
                duration_us: Some(400_000_000),
                min_rate: None,
            })
            .collect(),
        detected_at_us: 420_000_000,
    }
}

fn main() {
    println!("ranks   mean location time");
    for n in [16u32, 64, 256, 1024, 4096] {
        let ctx = hang_ctx(n);
        // Warm up, then average enough calls to steady the clock.
        for _ in 0..3 {
            locate_hang(&ctx).unwrap();
        }
        let mut iters = 0u32;
        let started = Instant::now();
        while started.elapsed().as_millis() < 100 {
            let report = locate_hang(&ctx).unwrap();
            assert_eq!(report.root_cause_ranks, vec![RankId(1)]);
            iters += 1;
        }
        let mean = started.elapsed().as_secs_f64() / iters as f64;
        println!("{n:>5}   {:>10.1} us  ({iters} calls)", mean * 1e6);
    }
}
