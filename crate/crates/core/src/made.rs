//! MADE density estimator over binary label vectors.
//!
//! One hidden layer of rectifier units sits between two masked dense layers.
//! For an ordering `o` and hidden connectivity `m(h)` in `[0, |Y| - 2]`, input
//! `i'` feeds hidden unit `h` iff `m(h) >= o(i')`, and `h` feeds output `i` iff
//! `o(i) > m(h)`. Output `i` therefore sees only labels that precede it in
//! `o`, and the product of the per-label conditionals is a normalised joint.
//!
//! All orderings share one set of weights; only the masks differ. Training
//! cycles through the fixed mask sets one minibatch at a time and scoring
//! averages the per-ordering joints.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::MadeConfig;
use crate::error::{Error, Result};
use crate::labels::{LabelSet, LabelSpace};
use crate::nn::activation::log_sum_exp;
use crate::nn::{log_sigmoid, relu, seeded_rng, sigmoid, Adam, DenseLayer, Mask, ModelRng, Parameters};

/// A permutation of the labels; `position(i)` is label `i`'s place in the autoregressive order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    position: Vec<usize>,
}

impl Ordering {
    pub fn new(position: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; position.len()];
        for &p in &position {
            if p >= position.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::input(format!("{position:?} is not a permutation")));
            }
        }
        Ok(Self { position })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            position: (0..n).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut position: Vec<usize> = (0..n).collect();
        position.shuffle(rng);
        Self { position }
    }

    pub fn position(&self, label: usize) -> usize {
        self.position[label]
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.position
    }
}

/// An ordering together with the hidden connectivity and the masks they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    ordering: Ordering,
    connectivity: Vec<usize>,
    input: Mask,
    output: Mask,
}

impl MaskSet {
    pub fn new(ordering: Ordering, connectivity: Vec<usize>) -> Result<Self> {
        let n = ordering.len();
        let max_degree = n.saturating_sub(2);
        if let Some(&bad) = connectivity.iter().find(|&&m| m > max_degree) {
            return Err(Error::input(format!(
                "hidden connectivity {bad} exceeds {max_degree} for {n} labels"
            )));
        }
        let input = Mask::from_fn(connectivity.len(), n, |h, i| connectivity[h] >= ordering.position(i));
        let output = Mask::from_fn(n, connectivity.len(), |i, h| ordering.position(i) > connectivity[h]);
        Ok(Self {
            ordering,
            connectivity,
            input,
            output,
        })
    }

    pub fn random(num_labels: usize, hidden: usize, rng: &mut ModelRng) -> Self {
        let ordering = Ordering::random(num_labels, rng);
        let max_degree = num_labels.saturating_sub(2);
        let connectivity = (0..hidden).map(|_| rng.random_range(0..=max_degree)).collect();
        Self::new(ordering, connectivity).expect("sampled connectivity is in range")
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.connectivity
    }

    /// `[hidden x labels]`.
    pub fn input_mask(&self) -> &Mask {
        &self.input
    }

    /// `[labels x hidden]`.
    pub fn output_mask(&self) -> &Mask {
        &self.output
    }
}

/// Trainable MADE weights, shared by every ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct MadeParams {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl Parameters for MadeParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.hidden.tensors();
        t.extend(self.output.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.hidden.tensors_mut();
        t.extend(self.output.tensors_mut());
        t
    }
}

struct Forward {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MadeModel {
    num_labels: usize,
    label_digest: String,
    config: MadeConfig,
    params: MadeParams,
    masks: Vec<MaskSet>,
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

impl MadeModel {
    /// Fresh model: glorot weights, zero biases, and `n_orderings` sampled mask sets.
    pub fn new(space: &LabelSpace, config: MadeConfig) -> Result<Self> {
        config.validate()?;
        let n = space.len();
        let mut rng = seeded_rng(config.seed);
        let masks = (0..config.n_orderings)
            .map(|_| MaskSet::random(n, config.hidden, &mut rng))
            .collect();
        let params = MadeParams {
            hidden: DenseLayer::glorot(n, config.hidden, &mut rng),
            output: DenseLayer::glorot(config.hidden, n, &mut rng),
        };
        Ok(Self {
            num_labels: n,
            label_digest: space.digest(),
            config,
            params,
            masks,
        })
    }

    /// Reassembles a model from stored parts, checking every shape.
    pub fn from_parts(
        num_labels: usize,
        label_digest: String,
        config: MadeConfig,
        params: MadeParams,
        masks: Vec<MaskSet>,
    ) -> Result<Self> {
        config.validate()?;
        let hidden = config.hidden;
        if params.hidden.weights.shape() != (hidden, num_labels)
            || params.output.weights.shape() != (num_labels, hidden)
            || params.hidden.bias.len() != hidden
            || params.output.bias.len() != num_labels
        {
            return Err(Error::input("MADE parameter shapes do not match the configuration"));
        }
        if masks.len() != config.n_orderings
            || masks
                .iter()
                .any(|m| m.ordering.len() != num_labels || m.connectivity.len() != hidden)
        {
            return Err(Error::input("MADE mask sets do not match the configuration"));
        }
        Ok(Self {
            num_labels,
            label_digest,
            config,
            params,
            masks,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn label_digest(&self) -> &str {
        &self.label_digest
    }

    pub fn config(&self) -> &MadeConfig {
        &self.config
    }

    pub fn params(&self) -> &MadeParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MadeParams {
        &mut self.params
    }

    pub fn mask_sets(&self) -> &[MaskSet] {
        &self.masks
    }

    pub fn n_orderings(&self) -> usize {
        self.masks.len()
    }

    fn check(&self, y: &LabelSet) -> Result<()> {
        match y.max() {
            Some(m) if m >= self.num_labels => Err(Error::input(format!(
                "label set {y} does not fit a space of {} labels",
                self.num_labels
            ))),
            _ => Ok(()),
        }
    }

    fn mask_set(&self, ordering: usize) -> Result<&MaskSet> {
        self.masks.get(ordering).ok_or_else(|| {
            Error::input(format!(
                "ordering {ordering} out of range; the model has {}",
                self.masks.len()
            ))
        })
    }

    fn forward(params: &MadeParams, masks: &MaskSet, active: &[usize]) -> Forward {
        let hidden_pre = params.hidden.forward_binary(active, Some(&masks.input));
        let hidden: Vec<f64> = hidden_pre.iter().copied().map(relu).collect();
        let logits = params.output.forward_with_mask(&hidden, Some(&masks.output));
        Forward {
            hidden_pre,
            hidden,
            logits,
        }
    }

    /// `P(y_i = 1 | y_{o_j < o_j(i)})` for every label `i`.
    pub fn conditionals(&self, ordering: usize, y: &LabelSet) -> Result<Vec<f64>> {
        self.check(y)?;
        let f = Self::forward(&self.params, self.mask_set(ordering)?, y.as_slice());
        Ok(f.logits.into_iter().map(sigmoid).collect())
    }

    fn log_joint_from_logits(logits: &[f64], y: &LabelSet) -> f64 {
        logits
            .iter()
            .enumerate()
            .map(|(i, &a)| if y.contains(i) { log_sigmoid(a) } else { log_sigmoid(-a) })
            .sum()
    }

    /// Log joint of `y` under a single ordering.
    pub fn ordering_log_joint(&self, ordering: usize, y: &LabelSet) -> Result<f64> {
        self.check(y)?;
        let f = Self::forward(&self.params, self.mask_set(ordering)?, y.as_slice());
        Ok(Self::log_joint_from_logits(&f.logits, y))
    }

    /// Log of the ordering-ensemble mean joint probability.
    pub fn log_joint(&self, y: &LabelSet) -> Result<f64> {
        self.check(y)?;
        let per_ordering: Vec<f64> = self
            .masks
            .iter()
            .map(|m| Self::log_joint_from_logits(&Self::forward(&self.params, m, y.as_slice()).logits, y))
            .collect();
        Ok(log_sum_exp(&per_ordering) - (per_ordering.len() as f64).ln())
    }

    /// Length-penalised score `log P(y) / |y|^beta`; the empty set is not divided.
    pub fn r_made(&self, y: &LabelSet, beta: f64) -> Result<f64> {
        Ok(length_penalized(self.log_joint(y)?, y.len(), beta))
    }

    /// Mean binary cross-entropy of `batch` under mask set `ordering`,
    /// averaged over labels and then over the batch.
    pub fn batch_loss(&self, params: &MadeParams, batch: &[LabelSet], ordering: usize) -> f64 {
        let masks = &self.masks[ordering];
        let per_set: f64 = batch
            .iter()
            .map(|y| -Self::log_joint_from_logits(&Self::forward(params, masks, y.as_slice()).logits, y))
            .sum();
        per_set / (batch.len() * self.num_labels) as f64
    }

    /// [`MadeModel::batch_loss`] and its gradient with respect to `params`.
    pub fn batch_loss_and_grad(
        &self,
        params: &MadeParams,
        batch: &[LabelSet],
        ordering: usize,
    ) -> (f64, MadeParams) {
        let masks = &self.masks[ordering];
        let mut grad = params.zeros_like();
        let scale = 1.0 / (batch.len() * self.num_labels) as f64;
        let mut loss = 0.0;
        for y in batch {
            let f = Self::forward(params, masks, y.as_slice());
            loss -= Self::log_joint_from_logits(&f.logits, y);
            let d_logits: Vec<f64> = f
                .logits
                .iter()
                .enumerate()
                .map(|(i, &a)| (sigmoid(a) - if y.contains(i) { 1.0 } else { 0.0 }) * scale)
                .collect();
            let d_hidden = params
                .output
                .backward(&f.hidden, &d_logits, Some(&masks.output), &mut grad.output);
            let d_pre: Vec<f64> = d_hidden
                .iter()
                .zip(&f.hidden_pre)
                .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            params
                .hidden
                .backward_binary(y.as_slice(), &d_pre, Some(&masks.input), &mut grad.hidden);
        }
        (loss * scale, grad)
    }
}

/// Divides by `len^beta` for non-empty sets.
pub fn length_penalized(score: f64, len: usize, beta: f64) -> f64 {
    if len == 0 {
        score
    } else {
        score / (len as f64).powf(beta)
    }
}

/// Trains a fresh model on `corpus` with minibatch Adam, cycling mask sets per minibatch.
pub fn train_made(space: &LabelSpace, corpus: &[LabelSet], config: MadeConfig) -> Result<(MadeModel, TrainReport)> {
    let model = MadeModel::new(space, config)?;
    continue_training(model, corpus)
}

/// Runs the configured number of epochs starting from `model`'s current weights.
pub fn continue_training(mut model: MadeModel, corpus: &[LabelSet]) -> Result<(MadeModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::input("MADE training corpus is empty"));
    }
    for y in corpus {
        model.check(y)?;
    }
    let train = model.config.train;
    let mut rng = seeded_rng(model.config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut optimizer = Adam::new(&train);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = TrainReport::default();
    let mut batch = Vec::with_capacity(train.batch_size);

    for _ in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(train.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| corpus[i].clone()));
            let ordering = (optimizer.steps() % model.masks.len() as u64) as usize;
            let (loss, grad) = model.batch_loss_and_grad(&model.params, &batch, ordering);
            epoch_loss += loss * chunk.len() as f64;
            optimizer.step(&mut model.params, &grad);
        }
        if !model.params.all_finite() {
            return Err(Error::Numeric("MADE parameters diverged".into()));
        }
        report.epoch_losses.push(epoch_loss / corpus.len() as f64);
    }
    report.steps = optimizer.steps();
    Ok((model, report))
}
