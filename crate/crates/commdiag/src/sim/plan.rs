//! Decomposition of collectives into per-rank, per-channel send/recv
//! primitive units.
//!
//! Every collective becomes a sequence of steps per channel lane. Within a
//! lane, a step's sends may start only once the previous step's expected
//! receives have fully arrived; that single gating rule realizes the data
//! dependencies of ring pipelines and tree reduce/broadcast passes alike,
//! and is what lets one stalled rank starve its peers.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::comm::Communicator;
use crate::trace::{Algorithm, OpKind, OperationDescriptor, RankId};

/// One step of a channel lane: sends serviced in order, receives expected
/// before the *next* step's sends may begin.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StepPlan {
    pub sends: Vec<(RankId, u64)>,
    pub recvs: Vec<(RankId, u64)>,
}

/// Steps of one channel lane of one rank.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChannelPlan {
    pub steps: Vec<StepPlan>,
}

impl ChannelPlan {
    pub fn total_send_units(&self) -> u64 {
        self.steps
            .iter()
            .flat_map(|s| &s.sends)
            .map(|&(_, u)| u)
            .sum()
    }

    pub fn total_recv_units(&self) -> u64 {
        self.steps
            .iter()
            .flat_map(|s| &s.recvs)
            .map(|&(_, u)| u)
            .sum()
    }
}

/// All lanes of one rank; `channels[c]` is lane `c`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RankPlan {
    pub channels: Vec<ChannelPlan>,
}

impl RankPlan {
    pub fn total_send_units(&self) -> u64 {
        self.channels.iter().map(|c| c.total_send_units()).sum()
    }

    pub fn total_recv_units(&self) -> u64 {
        self.channels.iter().map(|c| c.total_recv_units()).sum()
    }
}

/// The full decomposition of one collective round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollectivePlan {
    pub per_rank: BTreeMap<RankId, RankPlan>,
}

impl CollectivePlan {
    /// Sum of send units across the communicator for channel `c`.
    pub fn channel_send_total(&self, c: usize) -> u64 {
        self.per_rank
            .values()
            .filter_map(|r| r.channels.get(c))
            .map(|l| l.total_send_units())
            .sum()
    }

    /// Sum of recv units across the communicator for channel `c`.
    pub fn channel_recv_total(&self, c: usize) -> u64 {
        self.per_rank
            .values()
            .filter_map(|r| r.channels.get(c))
            .map(|l| l.total_recv_units())
            .sum()
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Decomposes `descriptor` over `communicator` into per-rank plans using
/// `channels` lanes.
///
/// Ring collectives shard the payload across ranks and channels: each
/// channel of each rank moves `ceil(bytes / (ranks * channels * unit))`
/// units per step, `unit` being the protocol's payload granularity. Tree
/// collectives move whole chunks of `ceil(bytes / (channels * unit))` units
/// per edge, once up in the reduce pass and once down in the broadcast
/// pass. Every count is at least one unit, so even a 4-byte barrier leaves
/// a trace.
pub fn decompose_op(
    descriptor: &OperationDescriptor,
    communicator: &Communicator,
    channels: usize,
) -> Result<CollectivePlan> {
    if channels == 0 {
        return Err(Error::InvalidConfiguration("channels must be >= 1".into()));
    }
    if descriptor.data_size_bytes == 0 {
        return Err(Error::InvalidConfiguration(
            "data_size_bytes must be positive".into(),
        ));
    }
    let n = communicator.size() as u64;
    let unit = descriptor.protocol.unit_payload_bytes();
    let shard_units = ceil_div(descriptor.data_size_bytes, n * channels as u64 * unit).max(1);
    let chunk_units = ceil_div(descriptor.data_size_bytes, channels as u64 * unit).max(1);

    let lane_for = |index: usize| -> Result<ChannelPlan> {
        let steps = match (descriptor.op_name, communicator.algorithm) {
            (OpKind::AllReduce, Algorithm::Ring) => {
                ring_pipeline_steps(communicator, index, shard_units, 2 * (n as usize - 1))
            }
            (OpKind::AllGather, Algorithm::Ring) | (OpKind::ReduceScatter, Algorithm::Ring) => {
                ring_pipeline_steps(communicator, index, shard_units, n as usize - 1)
            }
            (OpKind::AlltoAll, Algorithm::Ring) => alltoall_steps(communicator, index, shard_units),
            (OpKind::Broadcast, Algorithm::Ring) => {
                ring_broadcast_steps(communicator, index, chunk_units)
            }
            (OpKind::AllReduce, Algorithm::Tree) => {
                tree_allreduce_steps(communicator, index, chunk_units)
            }
            (OpKind::Broadcast, Algorithm::Tree) => {
                tree_broadcast_steps(communicator, index, chunk_units)
            }
            (OpKind::Send, _) | (OpKind::Recv, _) => {
                point_to_point_steps(communicator, index, chunk_units, descriptor.op_name)?
            }
            (op, algo) => {
                return Err(Error::UnsupportedOperation(format!(
                    "{op} is not defined for the {algo} algorithm"
                )));
            }
        };
        Ok(ChannelPlan { steps })
    };

    let mut per_rank = BTreeMap::new();
    for (index, &rank) in communicator.members.iter().enumerate() {
        let lane = lane_for(index)?;
        let mut lanes = Vec::with_capacity(channels);
        for _ in 0..channels {
            lanes.push(lane.clone());
        }
        per_rank.insert(rank, RankPlan { channels: lanes });
    }
    Ok(CollectivePlan { per_rank })
}

/// Ring pipeline: each step forwards one shard to the successor while
/// receiving the next from the predecessor.
fn ring_pipeline_steps(
    comm: &Communicator,
    index: usize,
    units: u64,
    num_steps: usize,
) -> Vec<StepPlan> {
    let succ = comm.successor(index);
    let pred = comm.predecessor(index);
    (0..num_steps)
        .map(|_| StepPlan {
            sends: vec![(succ, units)],
            recvs: vec![(pred, units)],
        })
        .collect()
}

/// All-to-all over the ring membership: step `t` exchanges shards directly
/// with the peers `t + 1` positions away in each direction.
fn alltoall_steps(comm: &Communicator, index: usize, units: u64) -> Vec<StepPlan> {
    let n = comm.size();
    (1..n)
        .map(|t| StepPlan {
            sends: vec![(comm.members[(index + t) % n], units)],
            recvs: vec![(comm.members[(index + n - t) % n], units)],
        })
        .collect()
}

/// Chunk granularity of the pipelined ring broadcast: a hop forwards a
/// chunk as soon as it has it rather than waiting for the whole payload,
/// so per-rank durations differ only by the pipeline fill.
const BROADCAST_CHUNK_UNITS: u64 = 8;

/// Pipelined broadcast down the ring order from member 0.
fn ring_broadcast_steps(comm: &Communicator, index: usize, units: u64) -> Vec<StepPlan> {
    let n = comm.size();
    let chunks = chunk_sizes(units, BROADCAST_CHUNK_UNITS);
    let mut steps = Vec::new();
    if index == 0 {
        for &c in &chunks {
            steps.push(StepPlan {
                sends: vec![(comm.members[1], c)],
                recvs: vec![],
            });
        }
    } else if index + 1 < n {
        // Receive chunk i, then forward it while chunk i+1 arrives.
        steps.push(StepPlan {
            sends: vec![],
            recvs: vec![(comm.members[index - 1], chunks[0])],
        });
        for (i, &c) in chunks.iter().enumerate() {
            steps.push(StepPlan {
                sends: vec![(comm.members[index + 1], c)],
                recvs: chunks
                    .get(i + 1)
                    .map(|&next| vec![(comm.members[index - 1], next)])
                    .unwrap_or_default(),
            });
        }
    } else {
        for &c in &chunks {
            steps.push(StepPlan {
                sends: vec![],
                recvs: vec![(comm.members[index - 1], c)],
            });
        }
    }
    steps
}

fn chunk_sizes(total: u64, chunk: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(total.div_ceil(chunk) as usize);
    let mut left = total;
    while left > 0 {
        let c = left.min(chunk);
        out.push(c);
        left -= c;
    }
    out
}

/// Reduce toward the root, then broadcast back down. Each edge carries the
/// whole chunk once per direction, so same-shape members move identical
/// unit counts.
fn tree_allreduce_steps(comm: &Communicator, index: usize, units: u64) -> Vec<StepPlan> {
    let children: Vec<RankId> = comm
        .children(index)
        .into_iter()
        .map(|c| comm.members[c])
        .collect();
    let parent = comm.parent(index).map(|p| comm.members[p]);
    let mut steps = Vec::new();
    if !children.is_empty() {
        steps.push(StepPlan {
            sends: vec![],
            recvs: children.iter().map(|&c| (c, units)).collect(),
        });
    }
    match parent {
        Some(p) => {
            // Reduce up once the subtree is in, then wait for the broadcast.
            steps.push(StepPlan {
                sends: vec![(p, units)],
                recvs: vec![(p, units)],
            });
            if !children.is_empty() {
                steps.push(StepPlan {
                    sends: children.iter().map(|&c| (c, units)).collect(),
                    recvs: vec![],
                });
            }
        }
        None => {
            // Root: everything is in; start the broadcast.
            steps.push(StepPlan {
                sends: children.iter().map(|&c| (c, units)).collect(),
                recvs: vec![],
            });
        }
    }
    steps
}

fn tree_broadcast_steps(comm: &Communicator, index: usize, units: u64) -> Vec<StepPlan> {
    let children: Vec<RankId> = comm
        .children(index)
        .into_iter()
        .map(|c| comm.members[c])
        .collect();
    let parent = comm.parent(index).map(|p| comm.members[p]);
    let mut steps = Vec::new();
    if let Some(p) = parent {
        steps.push(StepPlan {
            sends: vec![],
            recvs: vec![(p, units)],
        });
    }
    if !children.is_empty() {
        steps.push(StepPlan {
            sends: children.iter().map(|&c| (c, units)).collect(),
            recvs: vec![],
        });
    }
    steps
}

/// Point-to-point between the two members of a pairwise communicator.
/// `Send` moves member 0 -> member 1; `Recv` is the mirror image.
fn point_to_point_steps(
    comm: &Communicator,
    index: usize,
    units: u64,
    op: OpKind,
) -> Result<Vec<StepPlan>> {
    if comm.size() != 2 {
        return Err(Error::UnsupportedOperation(format!(
            "{op} requires a pairwise communicator, got {} members",
            comm.size()
        )));
    }
    let sender_index = if op == OpKind::Send { 0 } else { 1 };
    let peer = comm.members[1 - index];
    Ok(if index == sender_index {
        vec![StepPlan {
            sends: vec![(peer, units)],
            recvs: vec![],
        }]
    } else {
        vec![StepPlan {
            sends: vec![],
            recvs: vec![(peer, units)],
        }]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{CommunicatorId, Protocol};

    fn comm(n: u32, algorithm: Algorithm) -> Communicator {
        Communicator::new(
            CommunicatorId(1),
            (0..n).map(RankId).collect(),
            algorithm,
        )
        .unwrap()
    }

    fn desc(op: OpKind, algo: Algorithm, proto: Protocol, bytes: u64) -> OperationDescriptor {
        OperationDescriptor::new(op, algo, proto, bytes).unwrap()
    }

    /// Brute-force ring allreduce enumerator: walk the textbook
    /// reduce-scatter + allgather schedule chunk by chunk and count the
    /// transfers each rank performs.
    fn ring_allreduce_oracle(n: usize, units_per_step: u64) -> Vec<(u64, u64)> {
        let mut counts = vec![(0u64, 0u64); n];
        // Two passes of n-1 steps each; every rank forwards one shard per
        // step and receives one shard per step.
        for _pass in 0..2 {
            for _step in 0..n - 1 {
                for r in 0..n {
                    counts[r].0 += units_per_step; // send to successor
                    counts[(r + 1) % n].1 += units_per_step; // arrives there
                }
            }
        }
        counts
    }

    #[test]
    fn ring_allreduce_matches_schedule_enumerator() {
        // 4 MiB over 4 ranks, 1 channel, Simple protocol: 6 steps of 2
        // units -> 12 send and 12 recv units per rank.
        let c = comm(4, Algorithm::Ring);
        let d = desc(
            OpKind::AllReduce,
            Algorithm::Ring,
            Protocol::Simple,
            4 * 1024 * 1024,
        );
        let plan = decompose_op(&d, &c, 1).unwrap();
        let oracle = ring_allreduce_oracle(4, 2);
        for (i, (_, rank_plan)) in plan.per_rank.iter().enumerate() {
            assert_eq!(rank_plan.channels[0].steps.len(), 6);
            assert_eq!(rank_plan.total_send_units(), oracle[i].0);
            assert_eq!(rank_plan.total_recv_units(), oracle[i].1);
            assert_eq!(rank_plan.total_send_units(), 12);
        }
    }

    #[test]
    fn tree_allreduce_same_layer_counts_match() {
        let c = comm(7, Algorithm::Tree);
        let d = desc(
            OpKind::AllReduce,
            Algorithm::Tree,
            Protocol::Simple,
            8 * 1024 * 1024,
        );
        let plan = decompose_op(&d, &c, 2).unwrap();
        // Both layer-1 members (heap indices 1, 2) and all layer-2 members
        // (indices 3..7) move identical unit counts.
        let totals: Vec<(u64, u64)> = c
            .members
            .iter()
            .map(|r| {
                let p = &plan.per_rank[r];
                (p.total_send_units(), p.total_recv_units())
            })
            .collect();
        assert_eq!(totals[1], totals[2]);
        assert!(totals[3..7].iter().all(|&t| t == totals[3]));
        // Layers genuinely differ: internal nodes carry their subtree.
        assert_ne!(totals[1], totals[3]);
    }

    #[test]
    fn barrier_still_moves_at_least_one_unit() {
        let c = comm(4, Algorithm::Ring);
        let d = desc(OpKind::AllReduce, Algorithm::Ring, Protocol::LL, 4);
        let plan = decompose_op(&d, &c, 1).unwrap();
        for rank_plan in plan.per_rank.values() {
            assert!(rank_plan.total_send_units() >= 1);
        }
    }

    #[test]
    fn alltoall_on_tree_is_unsupported() {
        let c = comm(4, Algorithm::Tree);
        let d = desc(OpKind::AlltoAll, Algorithm::Tree, Protocol::Simple, 1 << 20);
        assert!(matches!(
            decompose_op(&d, &c, 1),
            Err(Error::UnsupportedOperation(_))
        ));
    }

    #[test]
    fn send_requires_pairwise_communicator() {
        let c = comm(3, Algorithm::Ring);
        let d = desc(OpKind::Send, Algorithm::Ring, Protocol::Simple, 1 << 20);
        assert!(matches!(
            decompose_op(&d, &c, 1),
            Err(Error::UnsupportedOperation(_))
        ));
        let pair = comm(2, Algorithm::Ring);
        let plan = decompose_op(&d, &pair, 1).unwrap();
        assert_eq!(plan.per_rank[&RankId(0)].total_send_units(), 2);
        assert_eq!(plan.per_rank[&RankId(1)].total_recv_units(), 2);
        assert_eq!(plan.per_rank[&RankId(1)].total_send_units(), 0);
    }

    #[test]
    fn send_and_recv_units_balance_per_channel() {
        for (op, algo, n) in [
            (OpKind::AllReduce, Algorithm::Ring, 5),
            (OpKind::AllGather, Algorithm::Ring, 4),
            (OpKind::ReduceScatter, Algorithm::Ring, 6),
            (OpKind::AlltoAll, Algorithm::Ring, 4),
            (OpKind::Broadcast, Algorithm::Ring, 4),
            (OpKind::AllReduce, Algorithm::Tree, 7),
            (OpKind::AllReduce, Algorithm::Tree, 6),
            (OpKind::Broadcast, Algorithm::Tree, 9),
        ] {
            let c = comm(n, algo);
            let d = desc(op, algo, Protocol::LL128, 3 * 1024 * 1024);
            let plan = decompose_op(&d, &c, 3).unwrap();
            for ch in 0..3 {
                assert_eq!(
                    plan.channel_send_total(ch),
                    plan.channel_recv_total(ch),
                    "imbalance for {op} {algo} n={n} ch={ch}"
                );
            }
        }
    }
}
