//! Exact top-k label sets under independent per-label marginals.
//!
//! Every set is reached from the MAP set `{i : p_i >= 0.5}` by flipping some
//! labels, and flipping label `i` costs `|log(p_i / (1 - p_i))|` nats. Flip
//! sets are enumerated best-first over labels sorted by ascending cost: a
//! flip set `[j_1 < ... < j_m]` (positions in cost order) has the children
//! `[.., j_m, j_m + 1]` (extend) and `[.., j_{m-1}, j_m + 1]` (replace last),
//! so each flip set has exactly one parent and a child never costs less.
//!
//! Costs are compared in fixed point (units of 2^-40 nats) so that sums are
//! exact and costs that agree to about 1e-12 tie. Equal-cost sets come out in
//! lexicographic order of their sorted flipped
//! label indices. That order is consistent along parent/child edges (a
//! zero-cost extension appends a larger label; an equal-cost replacement
//! swaps in a larger label), which is what keeps best-first search exact
//! under ties.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::labels::{set_base_logprob, Candidate, LabelSet, MarginalPrediction};

/// Candidates for one instance, rank 1 (index 0) first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub instance_id: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The first `k` candidates.
    pub fn truncated(&self, k: usize) -> CandidateList {
        CandidateList {
            instance_id: self.instance_id.clone(),
            candidates: self.candidates.iter().take(k).cloned().collect(),
        }
    }
}

/// Flip cost of every label: the log-probability lost by moving it out of its MAP state.
pub fn flip_costs(marginals: &MarginalPrediction) -> Vec<f64> {
    marginals
        .probs()
        .iter()
        .map(|&p| (p.ln() - (1.0 - p).ln()).abs())
        .collect()
}

/// Fixed-point units per nat.
const COST_SCALE: f64 = (1u64 << 40) as f64;

fn fixed_cost(cost: f64) -> u128 {
    (cost * COST_SCALE).round() as u128
}

struct Node {
    /// Sum of fixed-point flip costs; the primary sort key.
    key: u128,
    /// `key` without the last flip.
    prefix_key: u128,
    /// Sum of flip costs, accumulated in position order.
    total: f64,
    /// `total` without the last flip.
    prefix: f64,
    positions: Vec<usize>,
    /// Flipped label indices, ascending. Secondary sort key.
    labels: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp(&other.key)
            .then_with(|| self.labels.cmp(&other.labels))
    }
}

/// The `min(k, 2^|Y|)` most probable label sets, most probable first.
pub fn enumerate_topk(marginals: &MarginalPrediction, k: usize) -> Result<CandidateList> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let n = marginals.num_labels();
    let limit = match u32::try_from(n).ok().and_then(|n| 1usize.checked_shl(n)) {
        Some(total) => k.min(total),
        None => k,
    };

    let costs = flip_costs(marginals);
    let fixed: Vec<u128> = costs.iter().map(|&c| fixed_cost(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (fixed[i], i));
    let sorted_costs: Vec<(u128, f64)> = order.iter().map(|&i| (fixed[i], costs[i])).collect();

    let map_set = marginals.map_set();
    let map_dense = map_set.to_dense(n);
    let map_logprob = set_base_logprob(marginals, &map_set)?;

    let node = |positions: Vec<usize>, (prefix_key, prefix): (u128, f64), next: usize| {
        let mut labels: Vec<usize> = positions.iter().map(|&p| order[p]).collect();
        labels.sort_unstable();
        let (k, c) = sorted_costs.get(next).copied().unwrap_or((0, 0.0));
        Node {
            key: prefix_key + k,
            prefix_key,
            total: prefix + c,
            prefix,
            positions,
            labels,
        }
    };

    let mut heap = BinaryHeap::new();
    heap.push(Reverse(node(Vec::new(), (0, 0.0), n)));
    let mut candidates = Vec::with_capacity(limit);

    while candidates.len() < limit {
        let Some(Reverse(cur)) = heap.pop() else { break };

        let next = cur.positions.last().map_or(0, |&j| j + 1);
        if next < n {
            let mut extended = cur.positions.clone();
            extended.push(next);
            heap.push(Reverse(node(extended, (cur.key, cur.total), next)));
            if let Some((_, head)) = cur.positions.split_last() {
                let mut replaced = head.to_vec();
                replaced.push(next);
                heap.push(Reverse(node(replaced, (cur.prefix_key, cur.prefix), next)));
            }
        }

        let mut dense = map_dense.clone();
        for &label in &cur.labels {
            dense[label] = !dense[label];
        }
        candidates.push(Candidate::new(
            LabelSet::from_dense(&dense),
            map_logprob - cur.total,
        ));
    }

    Ok(CandidateList {
        instance_id: marginals.instance_id.clone(),
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Sorts all `2^n` subsets by directly computed log-probability, breaking
    /// ties by the sorted list of labels that differ from the MAP set.
    fn brute_force(probs: &[f64]) -> Vec<(LabelSet, f64)> {
        let n = probs.len();
        let map: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
        let mut all: Vec<(LabelSet, f64, Vec<usize>)> = (0..1u64 << n)
            .map(|mask| {
                let bits: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                // Summing sorted terms makes equal multisets of terms tie exactly.
                let mut terms: Vec<f64> = (0..n)
                    .map(|i| if bits[i] { probs[i].ln() } else { (1.0 - probs[i]).ln() })
                    .collect();
                terms.sort_by(f64::total_cmp);
                let lp: f64 = terms.iter().sum();
                let flips: Vec<usize> = (0..n).filter(|&i| bits[i] != map[i]).collect();
                (LabelSet::from_dense(&bits), lp, flips)
            })
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
        all.into_iter().map(|(s, lp, _)| (s, lp)).collect()
    }

    fn check_against_oracle(probs: &[f64], k: usize) {
        let m = MarginalPrediction::new("t", probs.to_vec()).unwrap();
        let got = enumerate_topk(&m, k).unwrap();
        let want = brute_force(m.probs());
        assert_eq!(got.len(), k.min(want.len()));
        for (c, (set, lp)) in got.candidates.iter().zip(&want) {
            assert_eq!(&c.set, set);
            assert!((c.base_logprob - lp).abs() < 1e-9);
        }
    }

    #[test]
    fn map_is_rank_one() {
        let m = MarginalPrediction::new("t", vec![0.9, 0.8, 0.3]).unwrap();
        let top = enumerate_topk(&m, 1).unwrap();
        assert_eq!(top.candidates[0].set, LabelSet::from_indices([0, 1]));
        assert!((top.candidates[0].base_logprob - 0.504f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_eight_subsets_in_order() {
        check_against_oracle(&[0.9, 0.8, 0.3], 8);
        let m = MarginalPrediction::new("t", vec![0.9, 0.8, 0.3]).unwrap();
        let all = enumerate_topk(&m, 8).unwrap();
        let expected: Vec<LabelSet> = [
            vec![0, 1],
            vec![0, 1, 2],
            vec![0],
            vec![1],
            vec![0, 2],
            vec![1, 2],
            vec![],
            vec![2],
        ]
        .into_iter()
        .map(LabelSet::from_indices)
        .collect();
        let got: Vec<LabelSet> = all.candidates.into_iter().map(|c| c.set).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn k_larger_than_space_is_truncated() {
        let m = MarginalPrediction::new("t", vec![0.2, 0.7]).unwrap();
        assert_eq!(enumerate_topk(&m, 50).unwrap().len(), 4);
        assert!(enumerate_topk(&m, 0).is_err());
    }

    #[test]
    fn exact_half_goes_into_map_and_ties_are_lexicographic() {
        let m = MarginalPrediction::new("t", vec![0.5, 0.5, 0.1]).unwrap();
        let got: Vec<LabelSet> = enumerate_topk(&m, 4)
            .unwrap()
            .candidates
            .into_iter()
            .map(|c| c.set)
            .collect();
        // flips of cost zero: [], [0], [0, 1], [1]
        let want: Vec<LabelSet> = [vec![0, 1], vec![1], vec![], vec![0]]
            .into_iter()
            .map(LabelSet::from_indices)
            .collect();
        assert_eq!(got, want);
        check_against_oracle(&[0.5, 0.5, 0.1], 8);
    }

    #[test]
    fn duplicate_probabilities_tie_break() {
        check_against_oracle(&[0.25, 0.75, 0.25, 0.75, 0.5, 0.875], 64);
        check_against_oracle(&[0.5; 5], 32);
        check_against_oracle(&[0.0, 1.0, 0.0, 1.0], 16);
    }

    #[test]
    fn large_label_space_is_cheap() {
        let probs: Vec<f64> = (0..8922).map(|i| if i % 97 == 0 { 0.8 } else { 1e-6 }).collect();
        let m = MarginalPrediction::new("big", probs).unwrap();
        let list = enumerate_topk(&m, 50).unwrap();
        assert_eq!(list.len(), 50);
        assert_eq!(list.candidates[0].set, m.map_set());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_enumeration(probs in prop::collection::vec(0.0f64..=1.0, 1..11), k in 1usize..300) {
            check_against_oracle(&probs, k);
        }

        #[test]
        fn prefix_consistency(probs in prop::collection::vec(0.0f64..=1.0, 1..12), j in 1usize..40) {
            let m = MarginalPrediction::new("p", probs).unwrap();
            let full = enumerate_topk(&m, 40).unwrap();
            let prefix = enumerate_topk(&m, j).unwrap();
            prop_assert_eq!(&full.candidates[..prefix.len()], &prefix.candidates[..]);
        }

        #[test]
        fn cost_identity_and_monotone(probs in prop::collection::vec(0.0f64..=1.0, 1..14)) {
            let m = MarginalPrediction::new("p", probs).unwrap();
            let list = enumerate_topk(&m, 60).unwrap();
            for pair in list.candidates.windows(2) {
                prop_assert!(pair[0].base_logprob >= pair[1].base_logprob);
            }
            for c in &list.candidates {
                let direct = set_base_logprob(&m, &c.set).unwrap();
                prop_assert!((direct - c.base_logprob).abs() < 1e-9);
            }
            let mut sets: Vec<_> = list.candidates.iter().map(|c| c.set.clone()).collect();
            sets.sort();
            sets.dedup();
            prop_assert_eq!(sets.len(), list.len());
        }
    }
}
