//! Multi-head scaled dot-product attention with no positional terms.

use super::activation::softmax;
use super::dense::DenseLayer;
use super::init::ModelRng;
use super::matrix::Matrix;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: DenseLayer,
    pub key: DenseLayer,
    pub value: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    q_in: Matrix,
    k_in: Matrix,
    v_in: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// One `[queries x keys]` probability matrix per head.
    probs: Vec<Matrix>,
    concat: Matrix,
}

impl MultiHeadAttention {
    pub fn new(width: usize, heads: usize, rng: &mut ModelRng) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::config(format!(
                "model width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            heads,
            query: DenseLayer::glorot(width, width, rng),
            key: DenseLayer::glorot(width, width, rng),
            value: DenseLayer::glorot(width, width, rng),
            output: DenseLayer::glorot(width, width, rng),
        })
    }

    pub fn width(&self) -> usize {
        self.query.out_dim()
    }

    pub fn head_dim(&self) -> usize {
        self.width() / self.heads
    }

    /// Attends `queries` over `keys`/`values`; each head computes
    /// `softmax(Q_h K_h^T / sqrt(d_h)) V_h`, heads are concatenated and projected.
    pub fn forward(&self, queries: &Matrix, keys: &Matrix, values: &Matrix) -> Result<(Matrix, AttentionCache)> {
        let width = self.query.in_dim();
        if queries.cols() != width || keys.cols() != width || values.cols() != width {
            return Err(Error::input("attention inputs must all have the model width"));
        }
        if keys.rows() != values.rows() || keys.rows() == 0 {
            return Err(Error::input("attention needs the same non-zero number of keys and values"));
        }
        let q = self.query.forward_rows(queries);
        let k = self.key.forward_rows(keys);
        let v = self.value.forward_rows(values);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (nq, nk) = (q.rows(), k.rows());

        let mut concat = Matrix::zeros(nq, self.width());
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let mut p = Matrix::zeros(nq, nk);
            for i in 0..nq {
                let qi = &q.row(i)[cols.clone()];
                let scores: Vec<f64> = (0..nk)
                    .map(|j| scale * qi.iter().zip(&k.row(j)[cols.clone()]).map(|(a, b)| a * b).sum::<f64>())
                    .collect();
                let weights = softmax(&scores);
                let out = &mut concat.row_mut(i)[cols.clone()];
                for (j, &w) in weights.iter().enumerate() {
                    for (o, vj) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *o += w * vj;
                    }
                }
                p.row_mut(i).copy_from_slice(&weights);
            }
            probs.push(p);
        }
        let out = self.output.forward_rows(&concat);
        Ok((
            out,
            AttentionCache {
                q_in: queries.clone(),
                k_in: keys.clone(),
                v_in: values.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        ))
    }

    /// Self-attention: every token attends over the whole token set.
    pub fn forward_self(&self, x: &Matrix) -> Result<(Matrix, AttentionCache)> {
        self.forward(x, x, x)
    }

    /// Returns gradients with respect to the query, key and value inputs.
    pub fn backward(
        &self,
        cache: &AttentionCache,
        d_out: &Matrix,
        grad: &mut MultiHeadAttention,
    ) -> (Matrix, Matrix, Matrix) {
        let d_concat = self.output.backward_rows(&cache.concat, d_out, &mut grad.output);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (nq, nk) = (cache.q.rows(), cache.k.rows());
        let mut dq = Matrix::zeros(nq, self.width());
        let mut dk = Matrix::zeros(nk, self.width());
        let mut dv = Matrix::zeros(nk, self.width());

        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let p = &cache.probs[h];
            for i in 0..nq {
                let d_oi = &d_concat.row(i)[cols.clone()];
                let dp: Vec<f64> = (0..nk)
                    .map(|j| d_oi.iter().zip(&cache.v.row(j)[cols.clone()]).map(|(a, b)| a * b).sum())
                    .collect();
                let weighted: f64 = (0..nk).map(|j| p[(i, j)] * dp[j]).sum();
                for j in 0..nk {
                    let pij = p[(i, j)];
                    for (dvj, g) in dv.row_mut(j)[cols.clone()].iter_mut().zip(d_oi) {
                        *dvj += pij * g;
                    }
                    let ds = pij * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in cols.clone() {
                        dq[(i, c)] += ds * cache.k[(j, c)];
                        dk[(j, c)] += ds * cache.q[(i, c)];
                    }
                }
            }
        }

        let d_q_in = self.query.backward_rows(&cache.q_in, &dq, &mut grad.query);
        let d_k_in = self.key.backward_rows(&cache.k_in, &dk, &mut grad.key);
        let d_v_in = self.value.backward_rows(&cache.v_in, &dv, &mut grad.value);
        (d_q_in, d_k_in, d_v_in)
    }

    /// Backward pass for [`MultiHeadAttention::forward_self`].
    pub fn backward_self(&self, cache: &AttentionCache, d_out: &Matrix, grad: &mut MultiHeadAttention) -> Matrix {
        let (mut dx, dk, dv) = self.backward(cache, d_out, grad);
        dx.add_assign(&dk);
        dx.add_assign(&dv);
        dx
    }
}

impl Parameters for MultiHeadAttention {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.query, &self.key, &self.value, &self.output]
            .into_iter()
            .flat_map(|l| l.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.query, &mut self.key, &mut self.value, &mut self.output]
            .into_iter()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }
}
