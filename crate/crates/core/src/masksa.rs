//! Masked self-attention set scorer.
//!
//! A label set is fed to a Transformer encoder as an unordered bag of label
//! embeddings. To score member `i`, it is replaced by a MASK token and the
//! encoder predicts it from the rest; nothing in the network depends on
//! token position, so outputs are invariant to how the context is ordered.
//! Blocks use pre-normalisation: `x + attn(norm(x))`, then `x + ffn(norm(x))`,
//! followed by a final normalisation and a linear head over the labels.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::MaskSaConfig;
use crate::error::{Error, Result};
use crate::labels::{LabelSet, LabelSpace};
use crate::made::{length_penalized, TrainReport};
use crate::nn::init::normal_matrix;
use crate::nn::{
    log_softmax, relu, seeded_rng, softmax, Adam, AttentionCache, DenseLayer, LayerNorm, LayerNormCache, Matrix,
    MultiHeadAttention, Parameters,
};

const EMBEDDING_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attn_norm: LayerNorm,
    pub attention: MultiHeadAttention,
    pub ff_norm: LayerNorm,
    pub ff_in: DenseLayer,
    pub ff_out: DenseLayer,
}

impl Parameters for EncoderBlock {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.attn_norm.tensors();
        t.extend(self.attention.tensors());
        t.extend(self.ff_norm.tensors());
        t.extend(self.ff_in.tensors());
        t.extend(self.ff_out.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.attn_norm.tensors_mut();
        t.extend(self.attention.tensors_mut());
        t.extend(self.ff_norm.tensors_mut());
        t.extend(self.ff_in.tensors_mut());
        t.extend(self.ff_out.tensors_mut());
        t
    }
}

/// All Mask-SA weights. Embedding row `|Y|` is the MASK symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSaParams {
    pub embedding: Matrix,
    pub blocks: Vec<EncoderBlock>,
    pub final_norm: LayerNorm,
    pub head: DenseLayer,
}

impl Parameters for MaskSaParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = vec![self.embedding.as_slice()];
        for b in &self.blocks {
            t.extend(b.tensors());
        }
        t.extend(self.final_norm.tensors());
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = vec![self.embedding.as_mut_slice()];
        for b in &mut self.blocks {
            t.extend(b.tensors_mut());
        }
        t.extend(self.final_norm.tensors_mut());
        t.extend(self.head.tensors_mut());
        t
    }
}

struct BlockCache {
    norm1: LayerNormCache,
    attn: AttentionCache,
    norm2: LayerNormCache,
    ff_input: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
}

struct EncoderCache {
    tokens: Vec<usize>,
    blocks: Vec<BlockCache>,
    final_norm: LayerNormCache,
    slot_out: Vec<f64>,
}

impl EncoderBlock {
    fn forward(&self, x: &Matrix) -> (Matrix, BlockCache) {
        let (a, norm1) = self.attn_norm.forward(x);
        let (att, attn) = self.attention.forward_self(&a).expect("encoder shapes are consistent");
        let mut mid = x.clone();
        mid.add_assign(&att);
        let (ff_input, norm2) = self.ff_norm.forward(&mid);
        let ff_pre = self.ff_in.forward_rows(&ff_input);
        let mut ff_act = ff_pre.clone();
        ff_act.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
        let mut out = mid;
        out.add_assign(&self.ff_out.forward_rows(&ff_act));
        (
            out,
            BlockCache {
                norm1,
                attn,
                norm2,
                ff_input,
                ff_pre,
                ff_act,
            },
        )
    }

    fn backward(&self, cache: &BlockCache, d_out: &Matrix, grad: &mut EncoderBlock) -> Matrix {
        let mut d_pre = self.ff_out.backward_rows(&cache.ff_act, d_out, &mut grad.ff_out);
        for (d, &z) in d_pre.as_mut_slice().iter_mut().zip(cache.ff_pre.as_slice()) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        let d_ff_input = self.ff_in.backward_rows(&cache.ff_input, &d_pre, &mut grad.ff_in);
        let mut d_mid = d_out.clone();
        d_mid.add_assign(&self.ff_norm.backward(&cache.norm2, &d_ff_input, &mut grad.ff_norm));

        let d_a = self.attention.backward_self(&cache.attn, &d_mid, &mut grad.attention);
        let mut d_in = d_mid;
        d_in.add_assign(&self.attn_norm.backward(&cache.norm1, &d_a, &mut grad.attn_norm));
        d_in
    }
}

impl MaskSaParams {
    pub fn new(num_labels: usize, config: &MaskSaConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let embedding = normal_matrix(num_labels + 1, config.width, EMBEDDING_STD, &mut rng);
        let blocks = (0..config.layers)
            .map(|_| {
                Ok(EncoderBlock {
                    attn_norm: LayerNorm::new(config.width),
                    attention: MultiHeadAttention::new(config.width, config.heads, &mut rng)?,
                    ff_norm: LayerNorm::new(config.width),
                    ff_in: DenseLayer::glorot(config.width, config.ffn_width, &mut rng),
                    ff_out: DenseLayer::glorot(config.ffn_width, config.width, &mut rng),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embedding,
            blocks,
            final_norm: LayerNorm::new(config.width),
            head: DenseLayer::glorot(config.width, num_labels, &mut rng),
        })
    }

    fn mask_token(&self) -> usize {
        self.embedding.rows() - 1
    }

    /// Runs the encoder on `context` plus a trailing MASK and returns the label logits at the MASK.
    fn forward(&self, context: &[usize]) -> (Vec<f64>, EncoderCache) {
        let mut tokens = context.to_vec();
        tokens.push(self.mask_token());
        let mut x = self.embedding.gather_rows(&tokens);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&x);
            blocks.push(cache);
            x = next;
        }
        let slot = Matrix::from_vec(1, x.cols(), x.row(tokens.len() - 1).to_vec());
        let (normed, final_norm) = self.final_norm.forward(&slot);
        let slot_out = normed.row(0).to_vec();
        let logits = self.head.forward_with_mask(&slot_out, None);
        (
            logits,
            EncoderCache {
                tokens,
                blocks,
                final_norm,
                slot_out,
            },
        )
    }

    fn logits(&self, context: &[usize]) -> Vec<f64> {
        self.forward(context).0
    }

    /// Cross-entropy of predicting `target` at the MASK given `context`.
    pub fn cloze_loss(&self, context: &[usize], target: usize) -> f64 {
        -log_softmax(&self.logits(context))[target]
    }

    /// Adds `scale * d(cloze_loss)/d(params)` into `grad` and returns the unscaled loss.
    pub fn accumulate_cloze_grad(&self, context: &[usize], target: usize, scale: f64, grad: &mut MaskSaParams) -> f64 {
        let (logits, cache) = self.forward(context);
        let probs = softmax(&logits);
        let loss = -log_softmax(&logits)[target];
        let mut d_logits: Vec<f64> = probs.iter().map(|p| p * scale).collect();
        d_logits[target] -= scale;

        let d_slot = self.head.backward(&cache.slot_out, &d_logits, None, &mut grad.head);
        let d_slot = Matrix::from_vec(1, d_slot.len(), d_slot);
        let d_final_in = self.final_norm.backward(&cache.final_norm, &d_slot, &mut grad.final_norm);

        let width = self.embedding.cols();
        let mut dx = Matrix::zeros(cache.tokens.len(), width);
        dx.row_mut(cache.tokens.len() - 1).copy_from_slice(d_final_in.row(0));
        for ((block, bc), g) in self.blocks.iter().zip(&cache.blocks).zip(&mut grad.blocks).rev() {
            dx = block.backward(bc, &dx, g);
        }
        for (t, &token) in cache.tokens.iter().enumerate() {
            for (e, d) in grad.embedding.row_mut(token).iter_mut().zip(dx.row(t)) {
                *e += d;
            }
        }
        loss
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSaModel {
    num_labels: usize,
    label_digest: String,
    config: MaskSaConfig,
    params: MaskSaParams,
}

impl MaskSaModel {
    pub fn new(space: &LabelSpace, config: MaskSaConfig) -> Result<Self> {
        Ok(Self {
            num_labels: space.len(),
            label_digest: space.digest(),
            params: MaskSaParams::new(space.len(), &config)?,
            config,
        })
    }

    pub fn from_parts(num_labels: usize, label_digest: String, config: MaskSaConfig, params: MaskSaParams) -> Result<Self> {
        let expected = MaskSaParams::new(num_labels, &config)?;
        let shapes = |p: &MaskSaParams| p.tensors().iter().map(|t| t.len()).collect::<Vec<_>>();
        if shapes(&expected) != shapes(&params) || params.embedding.shape() != expected.embedding.shape() {
            return Err(Error::input("Mask-SA parameter shapes do not match the configuration"));
        }
        Ok(Self {
            num_labels,
            label_digest,
            config,
            params,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn label_digest(&self) -> &str {
        &self.label_digest
    }

    pub fn config(&self) -> &MaskSaConfig {
        &self.config
    }

    pub fn params(&self) -> &MaskSaParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut MaskSaParams {
        &mut self.params
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.num_labels) {
            Some(bad) => Err(Error::input(format!(
                "label {bad} does not fit a space of {} labels",
                self.num_labels
            ))),
            None => Ok(()),
        }
    }

    /// Distribution over labels for a MASK placed among `context`, in any order.
    pub fn cloze_context(&self, context: &[usize]) -> Result<Vec<f64>> {
        self.check_labels(context)?;
        Ok(softmax(&self.params.logits(context)))
    }

    /// `P(member | y - {member})` for every label.
    pub fn cloze(&self, y: &LabelSet, member: usize) -> Result<Vec<f64>> {
        if !y.contains(member) {
            return Err(Error::input(format!("label {member} is not a member of {y}")));
        }
        let context: Vec<usize> = y.iter().filter(|&l| l != member).collect();
        self.cloze_context(&context)
    }

    /// Pseudo-log-likelihood with members given in an arbitrary order.
    pub fn pll_of_members(&self, members: &[usize]) -> Result<f64> {
        self.check_labels(members)?;
        let mut context = Vec::with_capacity(members.len());
        let mut total = 0.0;
        for (k, &target) in members.iter().enumerate() {
            context.clear();
            context.extend(members.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &l)| l));
            total += log_softmax(&self.params.logits(&context))[target];
        }
        Ok(total)
    }

    /// `sum_i log P(y_i | y - {y_i})`; zero for the empty set.
    pub fn pll(&self, y: &LabelSet) -> Result<f64> {
        self.pll_of_members(y.as_slice())
    }

    /// `pll(y) / |y|^beta`, with `R(empty) = 0`.
    pub fn r_msa(&self, y: &LabelSet, beta: f64) -> Result<f64> {
        Ok(length_penalized(self.pll(y)?, y.len(), beta))
    }
}

/// Trains a fresh model; every step masks one uniformly chosen member of each sampled set.
pub fn train_masksa(space: &LabelSpace, corpus: &[LabelSet], config: MaskSaConfig) -> Result<(MaskSaModel, TrainReport)> {
    let model = MaskSaModel::new(space, config)?;
    continue_training(model, corpus)
}

pub fn continue_training(mut model: MaskSaModel, corpus: &[LabelSet]) -> Result<(MaskSaModel, TrainReport)> {
    let sets: Vec<&LabelSet> = corpus.iter().filter(|s| !s.is_empty()).collect();
    if sets.is_empty() {
        return Err(Error::input("Mask-SA training corpus has no non-empty label sets"));
    }
    for s in &sets {
        model.check_labels(s.as_slice())?;
    }
    let train = model.config.train;
    let mut rng = seeded_rng(model.config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut optimizer = Adam::new(&train);
    let mut order: Vec<usize> = (0..sets.len()).collect();
    let mut grad = model.params.zeros_like();
    let mut report = TrainReport::default();
    let mut context = Vec::new();

    for _ in 0..train.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(train.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let members = sets[idx].as_slice();
                let masked = rng.random_range(0..members.len());
                context.clear();
                context.extend(members.iter().enumerate().filter(|&(j, _)| j != masked).map(|(_, &l)| l));
                epoch_loss += model
                    .params
                    .accumulate_cloze_grad(&context, members[masked], scale, &mut grad);
            }
            optimizer.step(&mut model.params, &grad);
        }
        if !model.params.all_finite() {
            return Err(Error::Numeric("Mask-SA parameters diverged".into()));
        }
        report.epoch_losses.push(epoch_loss / sets.len() as f64);
    }
    report.steps = optimizer.steps();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::nn::{grad_check, GradCheckOptions};

    fn tiny(num_labels: usize, seed: u64) -> MaskSaModel {
        let space = LabelSpace::numbered(num_labels).unwrap();
        let config = MaskSaConfig {
            seed,
            ..MaskSaConfig::small(8, 2, 2)
        };
        MaskSaModel::new(&space, config).unwrap()
    }

    fn uniform_head(model: &mut MaskSaModel) {
        model.params_mut().head.fill(0.0);
    }

    #[test]
    fn uniform_head_gives_uniform_pll() {
        let mut m = tiny(2, 0);
        uniform_head(&mut m);
        let pll = m.pll(&LabelSet::from_indices([0])).unwrap();
        assert!((pll - 0.5f64.ln()).abs() < 1e-12);

        let mut m = tiny(4, 0);
        uniform_head(&mut m);
        let y = LabelSet::from_indices([1, 3]);
        assert!((m.r_msa(&y, 1.0).unwrap() - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn penalty_cases_and_empty_set() {
        let m = tiny(5, 1);
        let y = LabelSet::from_indices([0, 2, 4]);
        assert_eq!(m.r_msa(&y, 0.0).unwrap(), m.pll(&y).unwrap());
        let single = LabelSet::from_indices([3]);
        assert_eq!(m.r_msa(&single, 2.0).unwrap(), m.pll(&single).unwrap());
        assert_eq!(m.r_msa(&LabelSet::empty(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cloze_errors_and_distribution() {
        let m = tiny(6, 2);
        let y = LabelSet::from_indices([1, 4]);
        assert!(m.cloze(&y, 2).is_err());
        let p = m.cloze(&y, 4).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.cloze_context(&[6]).is_err());
    }

    #[test]
    fn singletons_share_the_context_free_distribution() {
        let m = tiny(6, 3);
        let a = m.cloze(&LabelSet::from_indices([0]), 0).unwrap();
        let b = m.cloze(&LabelSet::from_indices([5]), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masked_slot_does_not_leak() {
        let m = tiny(6, 4);
        let a = m.cloze(&LabelSet::from_indices([1, 2, 3]), 3).unwrap();
        let b = m.cloze(&LabelSet::from_indices([1, 2, 5]), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn context_order_does_not_matter() {
        let m = tiny(6, 5);
        let a = m.cloze_context(&[0, 3, 5]).unwrap();
        let b = m.cloze_context(&[5, 0, 3]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let p1 = m.pll_of_members(&[0, 3, 5]).unwrap();
        let p2 = m.pll_of_members(&[3, 5, 0]).unwrap();
        assert!((p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny(5, 6);
        let context = [0usize, 3];
        let target = 4;
        let mut grad = m.params().zeros_like();
        m.params().accumulate_cloze_grad(&context, target, 1.0, &mut grad);
        let err = grad_check(
            m.params(),
            &grad,
            |p| p.cloze_loss(&context, target),
            &GradCheckOptions {
                samples: 400,
                ..GradCheckOptions::default()
            },
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let space = LabelSpace::numbered(3).unwrap();
        let config = MaskSaConfig::small(8, 1, 2);
        assert!(train_masksa(&space, &[LabelSet::empty()], config).is_err());
    }

    #[test]
    fn training_is_deterministic_and_learns_pairs() {
        let space = LabelSpace::numbered(6).unwrap();
        let corpus: Vec<LabelSet> = (0..120)
            .map(|i| match i % 3 {
                0 => LabelSet::from_indices([0, 1]),
                1 => LabelSet::from_indices([2, 3]),
                _ => LabelSet::from_indices([4, 5]),
            })
            .collect();
        let config = MaskSaConfig {
            seed: 9,
            train: TrainConfig {
                step_size: 3e-3,
                batch_size: 8,
                epochs: 6,
                ..TrainConfig::default()
            },
            ..MaskSaConfig::small(16, 1, 2)
        };
        let (a, report) = train_masksa(&space, &corpus, config).unwrap();
        let (b, _) = train_masksa(&space, &corpus, config).unwrap();
        assert_eq!(a, b);
        assert!(report.epoch_losses.last().unwrap() < report.epoch_losses.first().unwrap());
        let p = a.cloze(&LabelSet::from_indices([0, 1]), 1).unwrap();
        let best = (0..6).max_by(|&x, &y| p[x].total_cmp(&p[y])).unwrap();
        assert_eq!(best, 1);
    }
}
