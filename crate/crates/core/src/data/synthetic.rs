//! Correlated label sets drawn from a mixture of independent-Bernoulli
//! components, plus the imperfect "base predictor" marginals that go with
//! them. Because the mixture is explicit, the exact joint is available for
//! small label spaces and serves as an oracle reranker.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::formats::{write_gold, write_joint_table, write_marginals, write_vocab};
use crate::error::{Error, Result};
use crate::labels::{LabelSet, LabelSpace, MarginalPrediction};
use crate::nn::{seeded_rng, sigmoid};

/// Largest label space whose exact joint table is materialised.
pub const MAX_EXACT_LABELS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    /// Per-label Bernoulli parameters.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_labels: usize,
    pub components: Vec<Component>,
    /// Standard deviation of the logit-space noise added to the true marginals.
    pub noise: f64,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub exact_joint: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_labels == 0 {
            return Err(Error::config("the label space must be non-empty"));
        }
        if self.components.is_empty() {
            return Err(Error::config("at least one mixture component is required"));
        }
        for (c, comp) in self.components.iter().enumerate() {
            if !(comp.weight.is_finite() && comp.weight > 0.0) {
                return Err(Error::config(format!("component {c} has non-positive weight {}", comp.weight)));
            }
            if comp.probs.len() != self.num_labels {
                return Err(Error::config(format!(
                    "component {c} has {} probabilities for {} labels",
                    comp.probs.len(),
                    self.num_labels
                )));
            }
            if let Some(p) = comp.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::config(format!("component {c} has probability {p} outside [0, 1]")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("component weights sum to {total}, not 1")));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::config("noise must be a finite non-negative number"));
        }
        if self.exact_joint && self.num_labels > MAX_EXACT_LABELS {
            return Err(Error::Capability(format!(
                "exact joint tables are limited to {MAX_EXACT_LABELS} labels, requested {}",
                self.num_labels
            )));
        }
        Ok(())
    }
}

/// Overlapping blocks of labels, one per component: block members are on with
/// probability `hi`, everything else with `lo`. Labels are shuffled into
/// blocks with `seed`; consecutive blocks share one label. Weights decrease
/// linearly, proportional to `2C - c`.
pub fn block_mixture(num_labels: usize, components: usize, hi: f64, lo: f64, seed: u64) -> Result<Vec<Component>> {
    if components == 0 || components > num_labels {
        return Err(Error::config(format!(
            "cannot build {components} blocks over {num_labels} labels"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut perm: Vec<usize> = (0..num_labels).collect();
    perm.shuffle(&mut rng);
    let stride = num_labels / components;
    let norm: f64 = (0..components).map(|c| (2 * components - c) as f64).sum();
    Ok((0..components)
        .map(|c| {
            let start = c * stride;
            let end = if c + 1 == components {
                num_labels
            } else {
                (start + stride + 1).min(num_labels)
            };
            let mut probs = vec![lo; num_labels];
            for &l in &perm[start..end] {
                probs[l] = hi;
            }
            Component {
                weight: (2 * components - c) as f64 / norm,
                probs,
            }
        })
        .collect())
}

/// `P(y)` for every set, indexed by membership bitmask.
pub fn exact_joint(num_labels: usize, components: &[Component]) -> Result<Vec<f64>> {
    if num_labels > MAX_EXACT_LABELS {
        return Err(Error::Capability(format!(
            "exact joint tables are limited to {MAX_EXACT_LABELS} labels, requested {num_labels}"
        )));
    }
    let mut joint = vec![0.0; 1 << num_labels];
    let mut table = Vec::with_capacity(1 << num_labels);
    for comp in components {
        table.clear();
        table.push(comp.weight);
        for &p in comp.probs.iter().take(num_labels) {
            let half = table.len();
            for j in 0..half {
                let t = table[j];
                table.push(t * p);
                table[j] = t * (1.0 - p);
            }
        }
        for (j, t) in joint.iter_mut().zip(&table) {
            *j += t;
        }
    }
    Ok(joint)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub gold: LabelSet,
    pub marginals: MarginalPrediction,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub space: LabelSpace,
    pub train: Vec<Instance>,
    pub val: Vec<Instance>,
    pub test: Vec<Instance>,
    pub joint: Option<Vec<f64>>,
}

fn logit(p: f64) -> f64 {
    p.ln() - (1.0 - p).ln()
}

fn sample_split(
    spec: &SyntheticSpec,
    name: &str,
    size: usize,
    picker: &WeightedIndex<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<Instance>> {
    let width = size.max(1).to_string().len().max(6);
    (0..size)
        .map(|i| {
            let c = picker.sample(rng);
            let comp = &spec.components[c];
            let members: Vec<usize> = (0..spec.num_labels)
                .filter(|&l| rng.random::<f64>() < comp.probs[l])
                .collect();
            let probs: Vec<f64> = comp
                .probs
                .iter()
                .map(|&p| {
                    let z: f64 = rng.sample(StandardNormal);
                    if spec.noise == 0.0 {
                        p
                    } else {
                        sigmoid(logit(p) + spec.noise * z)
                    }
                })
                .collect();
            Ok(Instance {
                gold: LabelSet::from_indices(members),
                marginals: MarginalPrediction::new(format!("{name}{i:0width$}"), probs)?,
                component: c,
            })
        })
        .collect()
}

/// Samples the three splits. Each instance draws a component, its gold set
/// from that component, and marginals equal to the component's probabilities
/// perturbed by `N(0, noise^2)` in logit space.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let picker = WeightedIndex::new(spec.components.iter().map(|c| c.weight))
        .map_err(|e| Error::config(format!("component weights: {e}")))?;
    let mut rng = seeded_rng(spec.seed);
    let train = sample_split(spec, "train", spec.train, &picker, &mut rng)?;
    let val = sample_split(spec, "val", spec.val, &picker, &mut rng)?;
    let test = sample_split(spec, "test", spec.test, &picker, &mut rng)?;
    let joint = if spec.exact_joint {
        Some(exact_joint(spec.num_labels, &spec.components)?)
    } else {
        None
    };
    Ok(SyntheticData {
        space: LabelSpace::numbered(spec.num_labels)?,
        train,
        val,
        test,
        joint,
    })
}

impl SyntheticData {
    pub fn gold(split: &[Instance]) -> Vec<LabelSet> {
        split.iter().map(|i| i.gold.clone()).collect()
    }

    pub fn marginals(split: &[Instance]) -> Vec<MarginalPrediction> {
        split.iter().map(|i| i.marginals.clone()).collect()
    }

    /// Writes `vocab.txt`, `{train,val,test}.{gold,marginals}.tsv` and,
    /// when present, `joint.tsv`. Returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let vocab = dir.join("vocab.txt");
        write_vocab(&vocab, &self.space)?;
        written.push(vocab);
        for (name, split) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            let gold = dir.join(format!("{name}.gold.tsv"));
            write_gold(
                &gold,
                &self.space,
                split.iter().map(|i| (i.marginals.instance_id.as_str(), &i.gold)),
            )?;
            let marg = dir.join(format!("{name}.marginals.tsv"));
            write_marginals(&marg, &self.space, &Self::marginals(split))?;
            written.extend([gold, marg]);
        }
        if let Some(joint) = &self.joint {
            let path = dir.join("joint.tsv");
            write_joint_table(&path, joint)?;
            written.push(path);
        }
        Ok(written)
    }
}
