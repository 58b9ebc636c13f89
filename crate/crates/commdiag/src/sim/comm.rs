//! Communicators: the rank groups executing collectives, shaped as a ring
//! or as a binary reduction tree.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::trace::{Algorithm, CommunicatorId, RankId};

/// A communication domain over an ordered set of member ranks.
///
/// Ring order follows the member list cyclically: every member has exactly
/// one predecessor and one successor. Tree shape is a binary heap over the
/// member list: member `i` parents members `2i+1` and `2i+2`, the root is
/// member 0, and `tree_layers` records each member's depth.
#[derive(Debug, Clone)]
pub struct Communicator {
    pub id: CommunicatorId,
    pub members: Vec<RankId>,
    pub algorithm: Algorithm,
    pub tree_layers: Option<BTreeMap<RankId, u32>>,
}

impl Communicator {
    pub fn new(id: CommunicatorId, members: Vec<RankId>, algorithm: Algorithm) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "communicator {id} needs at least 2 members, got {}",
                members.len()
            )));
        }
        let mut seen = members.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfiguration(format!(
                "communicator {id} has duplicate members"
            )));
        }
        let tree_layers = match algorithm {
            Algorithm::Ring => None,
            Algorithm::Tree => Some(
                members
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| (r, layer_of(i)))
                    .collect(),
            ),
        };
        Ok(Communicator {
            id,
            members,
            algorithm,
            tree_layers,
        })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn member_index(&self, rank: RankId) -> Option<usize> {
        self.members.iter().position(|&r| r == rank)
    }

    /// Ring successor of the member at `index`.
    pub fn successor(&self, index: usize) -> RankId {
        self.members[(index + 1) % self.members.len()]
    }

    /// Ring predecessor of the member at `index`.
    pub fn predecessor(&self, index: usize) -> RankId {
        let n = self.members.len();
        self.members[(index + n - 1) % n]
    }

    /// Tree children of the member at `index` (binary heap layout).
    pub fn children(&self, index: usize) -> Vec<usize> {
        [2 * index + 1, 2 * index + 2]
            .into_iter()
            .filter(|&c| c < self.members.len())
            .collect()
    }

    /// Tree parent of the member at `index`; `None` for the root.
    pub fn parent(&self, index: usize) -> Option<usize> {
        if index == 0 {
            None
        } else {
            Some((index - 1) / 2)
        }
    }

    pub fn layer(&self, rank: RankId) -> Option<u32> {
        self.tree_layers.as_ref().and_then(|m| m.get(&rank)).copied()
    }
}

/// Depth of heap position `i`: 0 for the root, increasing toward leaves.
pub fn layer_of(index: usize) -> u32 {
    (usize::BITS - 1) - (index + 1).leading_zeros()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranks(ids: &[u32]) -> Vec<RankId> {
        ids.iter().map(|&i| RankId(i)).collect()
    }

    #[test]
    fn ring_orders_members_cyclically() {
        let c = Communicator::new(CommunicatorId(1), ranks(&[0, 1, 2, 3]), Algorithm::Ring)
            .unwrap();
        let succ: Vec<RankId> = (0..4).map(|i| c.successor(i)).collect();
        assert_eq!(succ, ranks(&[1, 2, 3, 0]));
        assert_eq!(c.predecessor(0), RankId(3));
        assert!(c.tree_layers.is_none());
    }

    #[test]
    fn tree_over_seven_ranks_has_expected_layers() {
        // Oracle: build the binary tree by brute force and count nodes per
        // depth — 1 root, 2 at depth 1, 4 at depth 2.
        let members = ranks(&[10, 11, 12, 13, 14, 15, 16]);
        let c = Communicator::new(CommunicatorId(2), members.clone(), Algorithm::Tree).unwrap();
        let layers = c.tree_layers.as_ref().unwrap();
        let mut per_layer = BTreeMap::new();
        for (i, _rank) in members.iter().enumerate() {
            // Brute-force depth: walk parents until the root.
            let mut depth = 0;
            let mut at = i;
            while at != 0 {
                at = (at - 1) / 2;
                depth += 1;
            }
            assert_eq!(layers[&members[i]], depth);
            *per_layer.entry(depth).or_insert(0u32) += 1;
        }
        assert_eq!(per_layer[&0], 1);
        assert_eq!(per_layer[&1], 2);
        assert_eq!(per_layer[&2], 4);
    }

    #[test]
    fn duplicate_member_is_invalid() {
        let err =
            Communicator::new(CommunicatorId(3), ranks(&[0, 0, 1]), Algorithm::Ring).unwrap_err();
        assert!(matches!(err, Error::InvalidConfiguration(_)));
    }

    #[test]
    fn singleton_membership_is_invalid() {
        assert!(Communicator::new(CommunicatorId(4), ranks(&[5]), Algorithm::Ring).is_err());
    }
}
