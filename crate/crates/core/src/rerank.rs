//! Stage two: rescore candidate lists with `log P_base + alpha * R(y)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::candgen::CandidateList;
use crate::error::{Error, Result};
use crate::eval::{micro_macro_f1, EvalReport};
use crate::labels::{Candidate, LabelSet};
use crate::made::{length_penalized, MadeModel};
use crate::masksa::MaskSaModel;

/// Anything that can assign a label set a log-scale plausibility.
pub trait SetScorer: Sync {
    /// Score before the length penalty: a log joint or pseudo-log-likelihood.
    fn raw_score(&self, set: &LabelSet) -> Result<f64>;

    /// `raw_score / |set|^beta`; the empty set is left undivided.
    fn score(&self, set: &LabelSet, beta: f64) -> Result<f64> {
        Ok(length_penalized(self.raw_score(set)?, set.len(), beta))
    }
}

impl SetScorer for MadeModel {
    fn raw_score(&self, set: &LabelSet) -> Result<f64> {
        self.log_joint(set)
    }
}

impl SetScorer for MaskSaModel {
    fn raw_score(&self, set: &LabelSet) -> Result<f64> {
        self.pll(set)
    }
}

impl<S: SetScorer + ?Sized> SetScorer for &S {
    fn raw_score(&self, set: &LabelSet) -> Result<f64> {
        (**self).raw_score(set)
    }
}

impl<S: SetScorer + ?Sized + Send> SetScorer for Box<S> {
    fn raw_score(&self, set: &LabelSet) -> Result<f64> {
        (**self).raw_score(set)
    }
}

/// Scores sets by a tabulated log joint, indexed by membership bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableScorer {
    num_labels: usize,
    log_probs: Vec<f64>,
}

impl TableScorer {
    /// `probs[mask]` is the probability of the set whose bit `i` marks label `i`.
    pub fn from_probabilities(num_labels: usize, probs: &[f64]) -> Result<Self> {
        if num_labels >= 64 || probs.len() != 1usize << num_labels {
            return Err(Error::input(format!(
                "a joint table over {num_labels} labels needs 2^{num_labels} entries, got {}",
                probs.len()
            )));
        }
        Ok(Self {
            num_labels,
            log_probs: probs.iter().map(|p| p.ln()).collect(),
        })
    }
}

impl SetScorer for TableScorer {
    fn raw_score(&self, set: &LabelSet) -> Result<f64> {
        if set.max().is_some_and(|m| m >= self.num_labels) {
            return Err(Error::input(format!("label set {set} is outside the joint table")));
        }
        Ok(self.log_probs[set.to_bitmask() as usize])
    }
}

/// A candidate after rescoring, with its 1-based rank from candidate generation.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankedCandidate {
    pub candidate: Candidate,
    pub original_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankedList {
    pub instance_id: String,
    /// Sorted by combined score, best first.
    pub candidates: Vec<RerankedCandidate>,
}

impl RerankedList {
    pub fn top(&self) -> Option<&LabelSet> {
        self.candidates.first().map(|c| &c.candidate.set)
    }

    pub fn sets(&self) -> Vec<LabelSet> {
        self.candidates.iter().map(|c| c.candidate.set.clone()).collect()
    }
}

/// Raw scores of every candidate in every list, computed in parallel.
pub fn raw_scores<S: SetScorer + ?Sized>(lists: &[CandidateList], scorer: &S) -> Result<Vec<Vec<f64>>> {
    lists
        .par_iter()
        .map(|list| list.candidates.iter().map(|c| scorer.raw_score(&c.set)).collect())
        .collect()
}

/// Reorders `list` given precomputed raw scores for each of its candidates.
pub fn rescore_with_raw(list: &CandidateList, raw: &[f64], alpha: f64, beta: f64) -> RerankedList {
    assert_eq!(raw.len(), list.len(), "one raw score per candidate");
    let mut candidates: Vec<RerankedCandidate> = list
        .candidates
        .iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (c, &r))| {
            let rerank = length_penalized(r, c.set.len(), beta);
            let combined = if alpha == 0.0 {
                c.base_logprob
            } else {
                c.base_logprob + alpha * rerank
            };
            RerankedCandidate {
                candidate: Candidate {
                    set: c.set.clone(),
                    base_logprob: c.base_logprob,
                    rerank_score: Some(rerank),
                    combined_score: Some(combined),
                },
                original_rank: i + 1,
            }
        })
        .collect();
    // With alpha = 0 the generation order already ranks by base score, and
    // also orders sets whose base scores agree only to rounding.
    if alpha != 0.0 {
        candidates.sort_by(|a, b| {
            let (sa, sb) = (a.candidate.combined_score.unwrap(), b.candidate.combined_score.unwrap());
            sb.total_cmp(&sa).then(a.original_rank.cmp(&b.original_rank))
        });
    }
    RerankedList {
        instance_id: list.instance_id.clone(),
        candidates,
    }
}

/// Scores every candidate with `scorer` and sorts by `base + alpha * R`; ties keep generation order.
pub fn rescore<S: SetScorer + ?Sized>(list: &CandidateList, scorer: &S, alpha: f64, beta: f64) -> Result<RerankedList> {
    let raw: Vec<f64> = list
        .candidates
        .iter()
        .map(|c| scorer.raw_score(&c.set))
        .collect::<Result<_>>()?;
    Ok(rescore_with_raw(list, &raw, alpha, beta))
}

/// Which validation metric the grid search maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Micro,
    Macro,
}

impl Objective {
    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            Objective::Micro => report.micro_f1,
            Objective::Macro => report.macro_f1,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Objective::Micro),
            "macro" => Ok(Objective::Macro),
            other => Err(Error::config(format!("unknown objective {other:?}; use micro or macro"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub alpha: f64,
    pub beta: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub cells: Vec<GridCell>,
    pub chosen: GridCell,
    pub objective: Objective,
}

/// Top-1 prediction of every list at one `(alpha, beta)`.
pub fn top1_predictions(lists: &[CandidateList], raw: &[Vec<f64>], alpha: f64, beta: f64) -> Vec<LabelSet> {
    lists
        .iter()
        .zip(raw)
        .map(|(list, r)| {
            rescore_with_raw(list, r, alpha, beta)
                .top()
                .cloned()
                .unwrap_or_default()
        })
        .collect()
}

/// Evaluates every `(alpha, beta)` pair on validation data and picks the best.
///
/// Grids are visited in ascending order and only a strict improvement
/// replaces the incumbent, so ties go to the smaller alpha, then beta.
pub fn grid_search_with_raw(
    lists: &[CandidateList],
    raw: &[Vec<f64>],
    gold: &[LabelSet],
    num_labels: usize,
    alphas: &[f64],
    betas: &[f64],
    objective: Objective,
) -> Result<GridSearchResult> {
    if lists.is_empty() {
        return Err(Error::input("grid search needs at least one validation instance"));
    }
    if gold.len() != lists.len() {
        return Err(Error::input("one gold set is required per candidate list"));
    }
    let sorted = |grid: &[f64], name: &str| -> Result<Vec<f64>> {
        if grid.is_empty() {
            return Err(Error::config(format!("the {name} grid is empty")));
        }
        if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!("{name} values must be non-negative and finite")));
        }
        let mut g = grid.to_vec();
        g.sort_by(f64::total_cmp);
        g.dedup();
        Ok(g)
    };
    let alphas = sorted(alphas, "alpha")?;
    let betas = sorted(betas, "beta")?;

    let pairs: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    let cells: Vec<GridCell> = pairs
        .par_iter()
        .map(|&(alpha, beta)| {
            let preds = top1_predictions(lists, raw, alpha, beta);
            let report = micro_macro_f1(&preds, gold, num_labels)?;
            Ok(GridCell {
                alpha,
                beta,
                micro_f1: report.micro_f1,
                macro_f1: report.macro_f1,
            })
        })
        .collect::<Result<_>>()?;

    let value = |c: &GridCell| match objective {
        Objective::Micro => c.micro_f1,
        Objective::Macro => c.macro_f1,
    };
    let mut chosen = cells[0];
    for cell in &cells[1..] {
        if value(cell) > value(&chosen) {
            chosen = *cell;
        }
    }
    Ok(GridSearchResult {
        cells,
        chosen,
        objective,
    })
}

/// [`grid_search_with_raw`] scoring candidates with `scorer` once up front.
pub fn grid_search<S: SetScorer + ?Sized>(
    lists: &[CandidateList],
    gold: &[LabelSet],
    scorer: &S,
    num_labels: usize,
    alphas: &[f64],
    betas: &[f64],
    objective: Objective,
) -> Result<GridSearchResult> {
    let raw = raw_scores(lists, scorer)?;
    grid_search_with_raw(lists, &raw, gold, num_labels, alphas, betas, objective)
}

/// Labels the reranked prediction added and removed relative to the base prediction.
pub fn diff_prediction(base_top1: &LabelSet, reranked_top1: &LabelSet) -> (LabelSet, LabelSet) {
    (reranked_top1.difference(base_top1), base_top1.difference(reranked_top1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::enumerate_topk;
    use crate::labels::{LabelSpace, MarginalPrediction};
    use proptest::prelude::*;

    struct SizeScorer;

    impl SetScorer for SizeScorer {
        fn raw_score(&self, set: &LabelSet) -> Result<f64> {
            Ok(set.len() as f64)
        }
    }

    fn list(probs: Vec<f64>, k: usize) -> CandidateList {
        enumerate_topk(&MarginalPrediction::new("x", probs).unwrap(), k).unwrap()
    }

    #[test]
    fn alpha_zero_keeps_generation_order() {
        let l = list(vec![0.9, 0.6, 0.4, 0.2], 16);
        let r = rescore(&l, &SizeScorer, 0.0, 0.5).unwrap();
        for (i, c) in r.candidates.iter().enumerate() {
            assert_eq!(c.original_rank, i + 1);
            assert_eq!(c.candidate.combined_score, Some(c.candidate.base_logprob));
        }
    }

    #[test]
    fn single_candidate_stays_on_top() {
        let l = list(vec![0.9, 0.6, 0.4], 1);
        let r = rescore(&l, &SizeScorer, 100.0, 0.0).unwrap();
        assert_eq!(r.top(), Some(&l.candidates[0].set));
    }

    #[test]
    fn combined_score_identity() {
        let l = list(vec![0.7, 0.55, 0.3], 8);
        let r = rescore(&l, &SizeScorer, 0.3, 1.0).unwrap();
        for c in &r.candidates {
            let expected = c.candidate.base_logprob + 0.3 * c.candidate.rerank_score.unwrap();
            assert_eq!(c.candidate.combined_score.unwrap(), expected);
        }
        // the size scorer with beta = 1 gives R = 1 for every non-empty set
        assert!(r.candidates.iter().all(|c| c.candidate.set.is_empty() || c.candidate.rerank_score == Some(1.0)));
    }

    #[test]
    fn large_alpha_follows_the_scorer() {
        let l = list(vec![0.9, 0.6, 0.4, 0.2], 16);
        let r = rescore(&l, &SizeScorer, 1e6, 0.0).unwrap();
        assert_eq!(r.top(), Some(&LabelSet::from_indices([0, 1, 2, 3])));
    }

    #[test]
    fn table_scorer_reads_bitmasks() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let t = TableScorer::from_probabilities(2, &probs).unwrap();
        assert_eq!(t.raw_score(&LabelSet::from_indices([1])).unwrap(), 0.3f64.ln());
        assert!(TableScorer::from_probabilities(3, &probs).is_err());
    }

    #[test]
    fn degenerate_grid_is_the_base_predictor() {
        let lists = vec![list(vec![0.9, 0.6, 0.4], 8), list(vec![0.2, 0.8, 0.45], 8)];
        let gold = vec![LabelSet::from_indices([0, 2]), LabelSet::from_indices([1])];
        let res = grid_search(&lists, &gold, &SizeScorer, 3, &[0.0], &[0.0], Objective::Micro).unwrap();
        let base: Vec<LabelSet> = lists.iter().map(|l| l.candidates[0].set.clone()).collect();
        let report = micro_macro_f1(&base, &gold, 3).unwrap();
        assert_eq!(res.cells.len(), 1);
        assert_eq!(res.chosen.micro_f1, report.micro_f1);
        assert_eq!(res.chosen.macro_f1, report.macro_f1);
        assert!(grid_search(&[], &[], &SizeScorer, 3, &[0.0], &[0.0], Objective::Micro).is_err());
        assert!(grid_search(&lists, &gold, &SizeScorer, 3, &[], &[0.0], Objective::Micro).is_err());
    }

    #[test]
    fn grid_ties_prefer_small_alpha() {
        let lists = vec![list(vec![0.9, 0.1], 4)];
        let gold = vec![LabelSet::from_indices([0])];
        let res = grid_search(&lists, &gold, &SizeScorer, 2, &[0.1, 0.0, 0.05], &[0.5, 0.0], Objective::Micro).unwrap();
        assert_eq!((res.chosen.alpha, res.chosen.beta), (0.0, 0.0));
        assert_eq!(res.cells.len(), 6);
    }

    #[test]
    fn table6_examples() {
        let space = LabelSpace::new([
            "427.1", "427.41", "427.5", "693.0", "99.6", "995.0", "99.62", "96.04", "96.71", "571.5", "733.00",
            "733.09", "96.72", "V66.7", "305.1", "431", "96.6",
        ])
        .unwrap();
        let parse = |s: &str| space.parse_set(s).unwrap();
        let (added, removed) = diff_prediction(
            &parse("427.1 427.41 427.5 693.0 99.6 995.0"),
            &parse("427.1 427.41 427.5 693.0 99.6 995.0 99.62 96.04 96.71"),
        );
        assert_eq!(added, parse("99.62 96.04 96.71"));
        assert!(removed.is_empty());

        let (added, removed) = diff_prediction(
            &parse("571.5 733.00 733.09 96.04 96.72 V66.7"),
            &parse("571.5 733.00 96.04 96.72 V66.7 305.1 431 96.6"),
        );
        assert_eq!(added, parse("305.1 431 96.6"));
        assert_eq!(removed, parse("733.09"));

        let same = parse("571.5 96.6");
        let (a, r) = diff_prediction(&same, &same);
        assert!(a.is_empty() && r.is_empty());
    }

    proptest! {
        #[test]
        fn scale_coupling_and_idempotence(
            probs in prop::collection::vec(0.02f64..0.98, 2..7),
            alpha in 0.01f64..5.0,
            exp in -4i32..4,
        ) {
            let l = list(probs, 20);
            let raw: Vec<f64> = l.candidates.iter().map(|c| -(c.set.to_bitmask() as f64).sqrt()).collect();
            let c = 2f64.powi(exp);
            let a = rescore_with_raw(&l, &raw, alpha, 0.5);
            let scaled: Vec<f64> = raw.iter().map(|r| r / c).collect();
            let b = rescore_with_raw(&l, &scaled, alpha * c, 0.5);
            prop_assert_eq!(a.sets(), b.sets());

            // re-sorting an already reranked list changes nothing
            let again_list = CandidateList {
                instance_id: a.instance_id.clone(),
                candidates: a.candidates.iter().map(|c| c.candidate.clone()).collect(),
            };
            let again_raw: Vec<f64> = a.candidates.iter().map(|c| raw[c.original_rank - 1]).collect();
            let again = rescore_with_raw(&again_list, &again_raw, alpha, 0.5);
            prop_assert_eq!(again.sets(), a.sets());
        }
    }
}
