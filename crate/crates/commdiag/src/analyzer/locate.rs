//! Root-cause location: the decision tree separating root causes from
//! secondary stalls.
//!
//! Hang location classifies rank states. A rank whose operation counter
//! never reached the alerted round did not enter it (H1). Otherwise, ranks
//! that finished the round or ran a different descriptor are the non-hung
//! root causes (H2). When everyone is stuck, the rank with the least
//! send/recv progress marks the dead hardware (H3); that comparison is
//! restricted to comparison groups, since only same-shape ranks move
//! identical unit counts.
//!
//! Slow location splits the blame between computation and communication
//! with `P = (t_max - t_min) / (t_max - t_base)`. A delayed entrant runs a
//! normal-length round of its own, so `t_min` hugs the baseline and `P`
//! approaches 1; a throttled link stretches every rank's round equally, so
//! `t_min` chases `t_max` and `P` falls toward 0.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::analyzer::config::AnalyzerConfig;
use crate::analyzer::report::{AnomalyKind, AnomalyReport, RankEvidence};
use crate::collector::CommRecord;
use crate::error::{Error, Result};
use crate::trace::{Algorithm, CommunicatorId, OperationDescriptor, RankId, Rate};

/// Rank groups whose metrics are directly comparable: the whole membership
/// for a ring (uniform in/out degree), one group per layer for a tree.
pub fn comparison_groups(comm: &CommRecord) -> Result<Vec<Vec<RankId>>> {
    let communicator = comm.to_communicator()?;
    match communicator.algorithm {
        Algorithm::Ring => Ok(vec![communicator.members.clone()]),
        Algorithm::Tree => {
            let mut by_layer: BTreeMap<u32, Vec<RankId>> = BTreeMap::new();
            for &rank in &communicator.members {
                let layer = communicator.layer(rank).expect("tree member has a layer");
                by_layer.entry(layer).or_default().push(rank);
            }
            Ok(by_layer.into_values().collect())
        }
    }
}

/// Relative contribution of computation delay versus communication delay:
/// `(t_max - t_min) / (t_max - t_base)`, clamped into [0, 1] since a
/// learned baseline may slightly exceed a later round's minimum.
pub fn p_ratio(t_max_us: u64, t_min_us: u64, t_base_us: f64) -> Result<f64> {
    if (t_max_us as f64) <= t_base_us {
        return Err(Error::InvalidInvocation(format!(
            "contribution ratio needs t_max > t_base, got {t_max_us} <= {t_base_us}"
        )));
    }
    let p = (t_max_us as f64 - t_min_us as f64) / (t_max_us as f64 - t_base_us);
    Ok(p.clamp(0.0, 1.0))
}

/// Rank state at hang-alert time.
#[derive(Debug, Clone)]
pub struct HangRankState {
    pub rank: RankId,
    /// Highest round this rank is known to have posted; `None` when it has
    /// never been heard from.
    pub latest_round: Option<u64>,
    /// Whether the rank completed the alerted round.
    pub completed: bool,
    /// Descriptor the rank posted for the alerted round, when it did.
    pub descriptor: Option<OperationDescriptor>,
    /// Send plus recv counters summed over channels, latest observation.
    pub total_count: u64,
    pub duration_us: Option<u64>,
    pub min_rate: Option<Rate>,
}

/// Everything hang location needs about the alerted round.
#[derive(Debug, Clone)]
pub struct HangContext {
    pub comm: CommunicatorId,
    pub round: u64,
    pub groups: Vec<Vec<RankId>>,
    pub ranks: Vec<HangRankState>,
    pub detected_at_us: u64,
}

fn evidence_from(states: &[HangRankState]) -> Vec<RankEvidence> {
    states
        .iter()
        .map(|s| RankEvidence {
            rank: s.rank,
            duration_us: s.duration_us,
            total_count: s.total_count,
            min_rate: s.min_rate,
            latest_round: s.latest_round,
            completed: s.completed,
            descriptor: s.descriptor,
        })
        .collect()
}

/// Walks the hang decision tree and names the root-cause ranks.
pub fn locate_hang(ctx: &HangContext) -> Result<AnomalyReport> {
    if ctx.ranks.is_empty() {
        return Err(Error::InsufficientEvidence(
            "hang alert without rank snapshots".into(),
        ));
    }
    let report = |kind: AnomalyKind, roots: Vec<RankId>| AnomalyReport {
        kind,
        comm: ctx.comm,
        round: ctx.round,
        root_cause_ranks: roots,
        detected_at_us: ctx.detected_at_us,
        located_at_us: ctx.detected_at_us,
        t_base_us: None,
        t_max_us: None,
        t_min_us: None,
        ratio: None,
        p: None,
        slow_at_start: None,
        per_rank: evidence_from(&ctx.ranks),
    };

    // Branch one: ranks whose counter never advanced to this round.
    let not_entered: Vec<RankId> = ctx
        .ranks
        .iter()
        .filter(|s| s.latest_round.is_none_or(|r| r < ctx.round))
        .map(|s| s.rank)
        .collect();
    if !not_entered.is_empty() {
        return Ok(report(AnomalyKind::H1NotEntered, not_entered));
    }

    // Branch two: everyone entered, but some ranks are not hung — they
    // completed the round or are running a conflicting descriptor.
    let mode = modal_descriptor(&ctx.ranks);
    let non_hung: Vec<RankId> = ctx
        .ranks
        .iter()
        .filter(|s| {
            s.completed
                || (s.descriptor.is_some() && s.descriptor != mode)
        })
        .map(|s| s.rank)
        .collect();
    if !non_hung.is_empty() {
        return Ok(report(AnomalyKind::H2Inconsistent, non_hung));
    }

    // Branch three: all hung; the fewest send/recv counts mark the dead
    // kernel. Compare within groups, since only same-shape ranks are
    // expected to move identical unit counts; singleton groups have no
    // peer to compare against.
    let counts: BTreeMap<RankId, u64> = ctx
        .ranks
        .iter()
        .map(|s| (s.rank, s.total_count))
        .collect();
    let mut roots = Vec::new();
    for group in &ctx.groups {
        if group.len() < 2 {
            continue;
        }
        let vals: Vec<u64> = group.iter().filter_map(|r| counts.get(r).copied()).collect();
        if vals.is_empty() {
            continue;
        }
        let (min, max) = (
            *vals.iter().min().unwrap(),
            *vals.iter().max().unwrap(),
        );
        if min == max {
            continue; // uniform progress, nothing suspicious here
        }
        roots.extend(
            group
                .iter()
                .filter(|r| counts.get(r) == Some(&min))
                .copied(),
        );
    }
    if roots.is_empty() {
        // Every group is uniform: all ranks are equally minimal, report
        // the tie rather than silently dropping candidates.
        roots = ctx.ranks.iter().map(|s| s.rank).collect();
    }
    roots.sort_unstable();
    Ok(report(AnomalyKind::H3HardwareFault, roots))
}

fn modal_descriptor(states: &[HangRankState]) -> Option<OperationDescriptor> {
    let mut counts: Vec<(OperationDescriptor, usize)> = Vec::new();
    for s in states {
        if let Some(d) = s.descriptor {
            match counts.iter_mut().find(|(x, _)| *x == d) {
                Some((_, n)) => *n += 1,
                None => counts.push((d, 1)),
            }
        }
    }
    counts.into_iter().max_by_key(|&(_, n)| n).map(|(d, _)| d)
}

/// Per-rank measurements of the extreme round backing slow location.
#[derive(Debug, Clone)]
pub struct SlowRankState {
    pub rank: RankId,
    pub duration_us: u64,
    pub min_rate: Option<Rate>,
    pub total_count: u64,
}

/// Everything slow location needs about the detected slowdown.
#[derive(Debug, Clone)]
pub struct SlowContext {
    pub comm: CommunicatorId,
    pub round: u64,
    pub ranks: Vec<SlowRankState>,
    pub t_base_us: f64,
    pub t_max_us: u64,
    pub t_min_us: u64,
    pub ratio: f64,
    pub baseline_configured: bool,
    pub detected_at_us: u64,
}

/// Splits a detected slowdown into its class and root-cause ranks.
///
/// `P > beta`: computation-slow; the last entrant's own round is the
/// shortest, so the minimal-duration ranks are the cause. `P < alpha`:
/// communication-slow; the minimal-rate ranks are the cause, where rates
/// within one sample quantum of the minimum count as tied (change counting
/// on a fixed grid cannot distinguish closer rates). In between, both
/// candidate sets are reported as a mixed slowdown.
pub fn locate_slow(ctx: &SlowContext, config: &AnalyzerConfig) -> Result<AnomalyReport> {
    if ctx.ranks.is_empty() {
        return Err(Error::InsufficientEvidence(
            "slow alert without rank snapshots".into(),
        ));
    }
    let p = p_ratio(ctx.t_max_us, ctx.t_min_us, ctx.t_base_us)?;
    let (kind, mut roots) = if p > config.beta {
        (AnomalyKind::S1CompSlow, min_duration_ranks(&ctx.ranks))
    } else if p < config.alpha {
        (AnomalyKind::S2CommSlow, min_rate_ranks(&ctx.ranks)?)
    } else {
        let mut both = min_duration_ranks(&ctx.ranks);
        both.extend(min_rate_ranks(&ctx.ranks)?);
        both.sort_unstable();
        both.dedup();
        (AnomalyKind::S3MixedSlow, both)
    };
    roots.sort_unstable();
    roots.dedup();
    Ok(AnomalyReport {
        kind,
        comm: ctx.comm,
        round: ctx.round,
        root_cause_ranks: roots,
        detected_at_us: ctx.detected_at_us,
        located_at_us: ctx.detected_at_us,
        t_base_us: Some(ctx.t_base_us),
        t_max_us: Some(ctx.t_max_us),
        t_min_us: Some(ctx.t_min_us),
        ratio: Some(ctx.ratio),
        p: Some(p),
        slow_at_start: Some(ctx.baseline_configured),
        per_rank: ctx
            .ranks
            .iter()
            .map(|s| RankEvidence {
                rank: s.rank,
                duration_us: Some(s.duration_us),
                total_count: s.total_count,
                min_rate: s.min_rate,
                latest_round: Some(ctx.round),
                completed: true,
                descriptor: None,
            })
            .collect(),
    })
}

fn min_duration_ranks(ranks: &[SlowRankState]) -> Vec<RankId> {
    let min = ranks.iter().map(|s| s.duration_us).min().unwrap();
    ranks
        .iter()
        .filter(|s| s.duration_us == min)
        .map(|s| s.rank)
        .collect()
}

/// Ranks whose progress rate is minimal, with one-sample tolerance: a rate
/// of `1/c` ties with the minimum `1/c_max` when `c >= c_max - 1`.
fn min_rate_ranks(ranks: &[SlowRankState]) -> Result<Vec<RankId>> {
    let mut min: Option<Rate> = None;
    for s in ranks {
        let rate = s.min_rate.ok_or_else(|| {
            Error::InsufficientEvidence(format!("rank {} has no rate data", s.rank))
        })?;
        min = Some(match min {
            Some(m) => m.min(rate),
            None => rate,
        });
    }
    let min = min.unwrap();
    let threshold = if min.is_zero() {
        Rate::zero()
    } else {
        Rate::new(1, (*min.denom()).saturating_sub(1).max(1))
    };
    Ok(ranks
        .iter()
        .filter(|s| s.min_rate.unwrap() <= threshold)
        .map(|s| s.rank)
        .collect())
}
