//! Label vocabulary, label sets, and base-predictor marginals.

use std::collections::HashMap;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPSILON, 1 - EPSILON]` before any log.
pub const EPSILON: f64 = 1e-12;

/// Clamps a probability into `[EPSILON, 1 - EPSILON]`.
pub fn clamp_probability(p: f64) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::input(format!("non-finite probability {p}")));
    }
    Ok(p.clamp(EPSILON, 1.0 - EPSILON))
}

/// Ordered vocabulary of label codes with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        if codes.is_empty() {
            return Err(Error::input("label space must contain at least one label"));
        }
        let mut index = HashMap::with_capacity(codes.len());
        for (i, code) in codes.iter().enumerate() {
            if code.is_empty() || code.chars().any(char::is_whitespace) {
                return Err(Error::input(format!(
                    "label code {code:?} at position {i} is empty or contains whitespace"
                )));
            }
            if index.insert(code.clone(), i).is_some() {
                return Err(Error::input(format!("duplicate label code {code:?}")));
            }
        }
        Ok(Self { codes, index })
    }

    /// A space of `n` labels named `L0`, `L1`, ...
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("L{i}")))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    /// Always false; a label space holds at least one label.
    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn code(&self, index: usize) -> Option<&str> {
        self.codes.get(index).map(String::as_str)
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    /// Hex SHA-256 over the newline-joined codes. Identifies the vocabulary in checkpoints.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for code in &self.codes {
            hasher.update(code.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Space-separated codes of `set` in index order.
    pub fn format_set(&self, set: &LabelSet) -> String {
        set.iter()
            .map(|i| self.codes[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses space-separated codes. Duplicates are rejected.
    pub fn parse_set(&self, text: &str) -> Result<LabelSet> {
        let mut members = Vec::new();
        for code in text.split_whitespace() {
            let idx = self
                .index_of(code)
                .ok_or_else(|| Error::input(format!("unknown label code {code:?}")))?;
            members.push(idx);
        }
        let n = members.len();
        let set = LabelSet::from_indices(members);
        if set.len() != n {
            return Err(Error::input(format!("duplicate label code in {text:?}")));
        }
        Ok(set)
    }

    /// Checks that every member of `set` lies inside this space.
    pub fn check_set(&self, set: &LabelSet) -> Result<()> {
        match set.max() {
            Some(m) if m >= self.len() => Err(Error::input(format!(
                "label index {m} out of range for a space of {} labels",
                self.len()
            ))),
            _ => Ok(()),
        }
    }
}

/// A subset of the label space, stored as strictly ascending indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(Vec<usize>);

impl LabelSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Builds the canonical form: sorted, duplicates dropped.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn from_dense(bits: &[bool]) -> Self {
        Self(
            bits.iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        )
    }

    /// Decodes bit `i` of `mask` as membership of label `i`.
    pub fn from_bitmask(mask: u64, num_labels: usize) -> Self {
        Self((0..num_labels).filter(|&i| mask >> i & 1 == 1).collect())
    }

    pub fn to_bitmask(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &i| acc | 1u64 << i)
    }

    pub fn to_dense(&self, num_labels: usize) -> Vec<bool> {
        let mut bits = vec![false; num_labels];
        for &i in &self.0 {
            bits[i] = true;
        }
        bits
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.0.len() && b < other.0.len() {
            match self.0[a].cmp(&other.0[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    /// Members of `self` not in `other`, ascending.
    pub fn difference(&self, other: &LabelSet) -> LabelSet {
        LabelSet(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    /// Members in exactly one of the two sets, ascending.
    pub fn symmetric_difference(&self, other: &LabelSet) -> LabelSet {
        LabelSet::from_indices(self.difference(other).iter().chain(other.difference(self).iter()))
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::from_indices(iter)
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Per-label independent probabilities for one instance, clamped on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalPrediction {
    pub instance_id: String,
    probs: Vec<f64>,
}

impl MarginalPrediction {
    pub fn new(instance_id: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        let instance_id = instance_id.into();
        if probs.is_empty() {
            return Err(Error::input("marginal prediction has no labels"));
        }
        let probs = probs
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::input(format!(
                        "probability {p} for label {i} of {instance_id:?} is outside [0, 1]"
                    )));
                }
                clamp_probability(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { instance_id, probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_labels(&self) -> usize {
        self.probs.len()
    }

    /// The single most probable set, `{i : p_i >= 0.5}`.
    pub fn map_set(&self) -> LabelSet {
        LabelSet(
            self.probs
                .iter()
                .enumerate()
                .filter_map(|(i, &p)| (p >= 0.5).then_some(i))
                .collect(),
        )
    }
}

/// Natural-log probability of `set` under independent marginals.
pub fn set_base_logprob(marginals: &MarginalPrediction, set: &LabelSet) -> Result<f64> {
    let n = marginals.num_labels();
    if set.max().is_some_and(|m| m >= n) {
        return Err(Error::input(format!(
            "label set {set} does not fit a space of {n} labels"
        )));
    }
    let mut members = set.iter().peekable();
    let mut total = 0.0;
    for (i, &p) in marginals.probs().iter().enumerate() {
        if members.peek() == Some(&i) {
            members.next();
            total += p.ln();
        } else {
            total += (1.0 - p).ln();
        }
    }
    Ok(total)
}

/// One label-set hypothesis for an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub set: LabelSet,
    pub base_logprob: f64,
    pub rerank_score: Option<f64>,
    pub combined_score: Option<f64>,
}

impl Candidate {
    pub fn new(set: LabelSet, base_logprob: f64) -> Self {
        Self {
            set,
            base_logprob,
            rerank_score: None,
            combined_score: None,
        }
    }
}
