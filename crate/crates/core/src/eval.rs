//! Micro/macro F1, average rank of the best candidate, frequency buckets and
//! candidate-count sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::candgen::CandidateList;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::rerank::{rescore_with_raw, top1_predictions};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2TP / (2TP + FP + FN)`, zero when nothing was predicted or expected.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub label: usize,
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketScore {
    /// Labels in this bucket, ascending by training frequency.
    pub labels: Vec<usize>,
    pub min_frequency: usize,
    pub max_frequency: usize,
    pub counts: Counts,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub instances: usize,
    pub counts: Counts,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_label: Vec<LabelScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<BucketScore>>,
}

impl EvalReport {
    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>10}", "instances", self.instances);
        let _ = writeln!(out, "{:<16} {:>10.4}", "micro_precision", self.micro_precision);
        let _ = writeln!(out, "{:<16} {:>10.4}", "micro_recall", self.micro_recall);
        let _ = writeln!(out, "{:<16} {:>10.4}", "micro_f1", self.micro_f1);
        let _ = writeln!(out, "{:<16} {:>10.4}", "macro_f1", self.macro_f1);
        if let Some(buckets) = &self.buckets {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<8} {:>8} {:>10} {:>10} {:>10}", "bucket", "labels", "min_freq", "max_freq", "micro_f1");
            for (i, b) in buckets.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:<8} {:>8} {:>10} {:>10} {:>10.4}",
                    i + 1,
                    b.labels.len(),
                    b.min_frequency,
                    b.max_frequency,
                    b.micro_f1
                );
            }
        }
        out
    }
}

fn check_aligned(predictions: &[LabelSet], gold: &[LabelSet], num_labels: usize) -> Result<()> {
    if predictions.len() != gold.len() {
        return Err(Error::input(format!(
            "{} predictions for {} gold sets",
            predictions.len(),
            gold.len()
        )));
    }
    for s in predictions.iter().chain(gold) {
        if s.max().is_some_and(|m| m >= num_labels) {
            return Err(Error::input(format!("label set {s} does not fit {num_labels} labels")));
        }
    }
    Ok(())
}

/// Per-label confusion counts over aligned prediction and gold sets.
pub fn label_counts(predictions: &[LabelSet], gold: &[LabelSet], num_labels: usize) -> Result<Vec<Counts>> {
    check_aligned(predictions, gold, num_labels)?;
    let mut counts = vec![Counts::default(); num_labels];
    for (p, g) in predictions.iter().zip(gold) {
        for l in p.iter() {
            if g.contains(l) {
                counts[l].tp += 1;
            } else {
                counts[l].fp += 1;
            }
        }
        for l in g.difference(p).iter() {
            counts[l].fn_ += 1;
        }
    }
    Ok(counts)
}

/// Micro F1 pools counts over all labels; macro F1 averages per-label F1 over
/// the whole label space, so labels never predicted nor expected contribute 0.
pub fn micro_macro_f1(predictions: &[LabelSet], gold: &[LabelSet], num_labels: usize) -> Result<EvalReport> {
    let counts = label_counts(predictions, gold, num_labels)?;
    let mut total = Counts::default();
    let per_label: Vec<LabelScore> = counts
        .iter()
        .enumerate()
        .map(|(label, &c)| {
            total.add(c);
            LabelScore {
                label,
                counts: c,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
            }
        })
        .collect();
    let macro_f1 = per_label.iter().map(|s| s.f1).sum::<f64>() / num_labels as f64;
    Ok(EvalReport {
        instances: predictions.len(),
        counts: total,
        micro_precision: total.precision(),
        micro_recall: total.recall(),
        micro_f1: total.f1(),
        macro_f1,
        per_label,
        buckets: None,
    })
}

/// Aligns two id-keyed maps, failing with the ids missing on either side.
pub fn align_by_id(
    predictions: &BTreeMap<String, LabelSet>,
    gold: &BTreeMap<String, LabelSet>,
) -> Result<(Vec<String>, Vec<LabelSet>, Vec<LabelSet>)> {
    let missing_pred: Vec<&str> = gold.keys().filter(|k| !predictions.contains_key(*k)).map(String::as_str).collect();
    let missing_gold: Vec<&str> = predictions.keys().filter(|k| !gold.contains_key(*k)).map(String::as_str).collect();
    if !missing_pred.is_empty() || !missing_gold.is_empty() {
        return Err(Error::input(format!(
            "instance ids differ; missing predictions: [{}]; missing gold: [{}]",
            missing_pred.join(", "),
            missing_gold.join(", ")
        )));
    }
    let ids: Vec<String> = gold.keys().cloned().collect();
    let p = ids.iter().map(|k| predictions[k].clone()).collect();
    let g = ids.iter().map(|k| gold[k].clone()).collect();
    Ok((ids, p, g))
}

/// [`micro_macro_f1`] over id-keyed maps.
pub fn micro_macro_f1_by_id(
    predictions: &BTreeMap<String, LabelSet>,
    gold: &BTreeMap<String, LabelSet>,
    num_labels: usize,
) -> Result<EvalReport> {
    let (_, p, g) = align_by_id(predictions, gold)?;
    micro_macro_f1(&p, &g, num_labels)
}

/// Dice overlap of two sets; two empty sets match perfectly.
pub fn instance_f1(predicted: &LabelSet, gold: &LabelSet) -> f64 {
    let denom = predicted.len() + gold.len();
    if denom == 0 {
        1.0
    } else {
        2.0 * predicted.intersection_len(gold) as f64 / denom as f64
    }
}

/// 1-based rank of the candidate with the highest instance F1; the first one on ties.
pub fn best_rank(ranked: &[LabelSet], gold: &LabelSet) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in ranked.iter().enumerate() {
        let f = instance_f1(s, gold);
        if best.is_none_or(|(_, b)| f > b) {
            best = Some((i + 1, f));
        }
    }
    best.map(|(r, _)| r)
}

/// Mean over instances of [`best_rank`].
pub fn avg_best_rank(ranked: &[Vec<LabelSet>], gold: &[LabelSet]) -> Result<f64> {
    if ranked.len() != gold.len() {
        return Err(Error::input("one gold set is required per candidate list"));
    }
    if ranked.is_empty() {
        return Err(Error::input("no candidate lists to rank"));
    }
    let mut total = 0usize;
    for (list, g) in ranked.iter().zip(gold) {
        total += best_rank(list, g).ok_or_else(|| Error::input("empty candidate list"))?;
    }
    Ok(total as f64 / ranked.len() as f64)
}

/// Splits labels, sorted by ascending training frequency, into `buckets`
/// groups whose sizes differ by at most one.
pub fn frequency_buckets(frequencies: &[usize], buckets: usize) -> Result<Vec<Vec<usize>>> {
    let n = frequencies.len();
    if buckets == 0 || buckets > n {
        return Err(Error::input(format!("cannot split {n} labels into {buckets} buckets")));
    }
    let mut labels: Vec<usize> = (0..n).collect();
    labels.sort_by_key(|&l| (frequencies[l], l));
    let (base, extra) = (n / buckets, n % buckets);
    let mut out = Vec::with_capacity(buckets);
    let mut start = 0;
    for b in 0..buckets {
        let size = base + usize::from(b < extra);
        out.push(labels[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

/// Label frequencies in a training corpus.
pub fn label_frequencies(corpus: &[LabelSet], num_labels: usize) -> Vec<usize> {
    let mut freq = vec![0; num_labels];
    for s in corpus {
        for l in s.iter() {
            freq[l] += 1;
        }
    }
    freq
}

/// Micro F1 restricted to each frequency bucket's labels.
pub fn bucketed_f1(
    predictions: &[LabelSet],
    gold: &[LabelSet],
    frequencies: &[usize],
    buckets: usize,
) -> Result<Vec<BucketScore>> {
    let counts = label_counts(predictions, gold, frequencies.len())?;
    Ok(frequency_buckets(frequencies, buckets)?
        .into_iter()
        .map(|labels| {
            let mut c = Counts::default();
            for &l in &labels {
                c.add(counts[l]);
            }
            BucketScore {
                min_frequency: frequencies[labels[0]],
                max_frequency: frequencies[*labels.last().unwrap()],
                labels,
                counts: c,
                micro_f1: c.f1(),
            }
        })
        .collect())
}

/// One point of a candidate-count curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Mean over instances of the best instance F1 reachable within the top `k`.
    pub oracle_instance_f1: f64,
}

/// Reranks only the top `k'` candidates of each list for every `k'` in `ks`.
pub fn sweep_k(
    lists: &[CandidateList],
    raw: &[Vec<f64>],
    gold: &[LabelSet],
    num_labels: usize,
    alpha: f64,
    beta: f64,
    ks: &[usize],
) -> Result<Vec<SweepPoint>> {
    if lists.len() != gold.len() || raw.len() != lists.len() {
        return Err(Error::input("candidate lists, raw scores and gold sets must align"));
    }
    ks.iter()
        .map(|&k| {
            if k == 0 || lists.iter().any(|l| l.len() < k) {
                return Err(Error::input(format!("k = {k} exceeds a candidate list length")));
            }
            let prefixes: Vec<CandidateList> = lists.iter().map(|l| l.truncated(k)).collect();
            let raw_prefix: Vec<Vec<f64>> = raw.iter().map(|r| r[..k].to_vec()).collect();
            let preds = top1_predictions(&prefixes, &raw_prefix, alpha, beta);
            let report = micro_macro_f1(&preds, gold, num_labels)?;
            let oracle = prefixes
                .iter()
                .zip(gold)
                .map(|(l, g)| l.candidates.iter().map(|c| instance_f1(&c.set, g)).fold(0.0, f64::max))
                .sum::<f64>()
                / lists.len() as f64;
            Ok(SweepPoint {
                k,
                micro_f1: report.micro_f1,
                macro_f1: report.macro_f1,
                oracle_instance_f1: oracle,
            })
        })
        .collect()
}

/// Average best rank before reranking and after reranking at `(alpha, beta)`.
pub fn avg_best_rank_before_after(
    lists: &[CandidateList],
    raw: &[Vec<f64>],
    gold: &[LabelSet],
    alpha: f64,
    beta: f64,
) -> Result<(f64, f64)> {
    let before: Vec<Vec<LabelSet>> = lists
        .iter()
        .map(|l| l.candidates.iter().map(|c| c.set.clone()).collect())
        .collect();
    let after: Vec<Vec<LabelSet>> = lists
        .iter()
        .zip(raw)
        .map(|(l, r)| rescore_with_raw(l, r, alpha, beta).sets())
        .collect();
    Ok((avg_best_rank(&before, gold)?, avg_best_rank(&after, gold)?))
}
