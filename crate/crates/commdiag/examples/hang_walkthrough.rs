//! Step through a hardware-fault hang: watch the victim's counters freeze,
//! its peers starve, and the decision tree walk to the root cause.
//!
//! ```bash
//! cargo run -p commdiag --example hang_walkthrough
//! ```

use commdiag::analyzer::{locate_hang, HangContext, HangRankState};
use commdiag::sim::{Cluster, ClusterConfig, FaultKind, FaultSpec, NoopHooks};
use commdiag::trace::{Algorithm, OpKind, OperationDescriptor, Protocol, RankId};

fn main() {
    let victim = RankId(2);
    let mut cluster = Cluster::build(ClusterConfig::new(8, 1, 0)).unwrap();
    let comm = cluster
        .create_communicator((0..8).map(RankId).collect(), Algorithm::Ring)
        .unwrap();
    let descriptor = OperationDescriptor::new(
        OpKind::AllReduce,
        Algorithm::Ring,
        Protocol::Simple,
        8 * 1024 * 1024,
    )
    .unwrap();

    // The victim's kernel dies after retiring 40% of its send units.
    let mut fault = FaultSpec::new(FaultKind::HardwareFault, victim, 0);
    fault.freeze_after_fraction = 0.4;
    cluster.add_fault(fault).unwrap();
    cluster
        .post_collective(comm, descriptor, 0, &mut NoopHooks)
        .unwrap();

    // Sample the cluster a few times while the stall propagates.
    println!("summed send+recv counters over time (victim is rank {victim}):");
    for ms in [1u64, 2, 4, 8, 400] {
        cluster.advance(ms * 1_000, &mut NoopHooks);
        let totals: Vec<u64> = (0..8)
            .map(|r| cluster.frame(RankId(r)).read_block(0).total())
            .collect();
        println!("  t={ms:>4} ms  {totals:?}");
    }
    assert!(cluster.is_frozen(victim));

    // What the analyzer sees at alert time: everyone entered, nobody
    // finished, so the fewest-counts rank marks the dead kernel.
    let ranks: Vec<HangRankState> = (0..8)
        .map(|r| {
            let snap = cluster.frame(RankId(r)).read_block(0);
            HangRankState {
                rank: RankId(r),
                latest_round: Some(0),
                completed: false,
                descriptor: Some(descriptor),
                total_count: snap.total(),
                duration_us: Some(cluster.now()),
                min_rate: None,
            }
        })
        .collect();
    let ctx = HangContext {
        comm,
        round: 0,
        groups: vec![(0..8).map(RankId).collect()],
        ranks,
        detected_at_us: cluster.now(),
    };
    let report = locate_hang(&ctx).unwrap();
    println!("\ndecision tree verdict: {report}");
    assert_eq!(report.root_cause_ranks, vec![victim]);
}
