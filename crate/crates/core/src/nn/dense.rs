use rand::Rng;

use super::matrix::{axpy, dot, masked_dot, Matrix};
use super::Parameters;
use crate::error::{Error, Result};

/// Binary connectivity matrix with the same `[out x in]` layout as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
    /// `bits` as 0.0 / 1.0 multipliers.
    scale: Vec<f64>,
}

impl Mask {
    pub fn from_fn(rows: usize, cols: usize, mut allow: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                bits.push(allow(r, c));
            }
        }
        let scale = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self { rows, cols, bits, scale }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| true)
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| false)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn allows(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_scale(&self, r: usize) -> &[f64] {
        &self.scale[r * self.cols..(r + 1) * self.cols]
    }

    pub fn count_allowed(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Affine map `y = (W ⊙ M) x + b` with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub mask: Option<Mask>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
            mask: None,
        }
    }

    /// Weights uniform in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weights: Matrix::from_vec(out_dim, in_dim, data),
            bias: vec![0.0; out_dim],
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Mask) -> Result<Self> {
        if mask.shape() != self.weights.shape() {
            return Err(Error::input(format!(
                "mask shape {:?} does not match weight shape {:?}",
                mask.shape(),
                self.weights.shape()
            )));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Forward pass using the layer's own mask, with shape checking.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim() {
            return Err(Error::input(format!(
                "input of length {} for a layer expecting {}",
                input.len(),
                self.in_dim()
            )));
        }
        Ok(self.forward_with_mask(input, self.mask.as_ref()))
    }

    /// Forward pass with an externally supplied mask, overriding `self.mask`.
    pub fn forward_with_mask(&self, input: &[f64], mask: Option<&Mask>) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim());
        (0..self.out_dim())
            .map(|o| {
                let w = self.weights.row(o);
                let z = match mask {
                    None => dot(w, input),
                    Some(m) => masked_dot(w, input, m.row_scale(o)),
                };
                self.bias[o] + z
            })
            .collect()
    }

    /// Forward pass for a binary input given by its active indices.
    pub fn forward_binary(&self, active: &[usize], mask: Option<&Mask>) -> Vec<f64> {
        let mut out = self.bias.clone();
        let cols = self.in_dim().max(1);
        let rows = out.iter_mut().zip(self.weights.as_slice().chunks_exact(cols));
        match mask {
            None => {
                for (z, w) in rows {
                    active.iter().for_each(|&i| *z += w[i]);
                }
            }
            Some(m) => {
                for ((z, w), s) in rows.zip(m.scale.chunks_exact(cols)) {
                    active.iter().for_each(|&i| *z += w[i] * s[i]);
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients for one input into `grad` and returns `dL/dinput`.
    pub fn backward(
        &self,
        input: &[f64],
        d_out: &[f64],
        mask: Option<&Mask>,
        grad: &mut DenseLayer,
    ) -> Vec<f64> {
        let mut d_in = vec![0.0; self.in_dim()];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let w = self.weights.row(o);
            let gw = grad.weights.row_mut(o);
            match mask {
                None => {
                    axpy(g, input, gw);
                    axpy(g, w, &mut d_in);
                }
                Some(m) => {
                    for (i, &keep) in m.row(o).iter().enumerate() {
                        if keep {
                            gw[i] += g * input[i];
                            d_in[i] += g * w[i];
                        }
                    }
                }
            }
        }
        d_in
    }

    /// Parameter gradients for a binary input given by its active indices.
    /// The input gradient is not needed for inputs and is not computed.
    pub fn backward_binary(&self, active: &[usize], d_out: &[f64], mask: Option<&Mask>, grad: &mut DenseLayer) {
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let gw = grad.weights.row_mut(o);
            for &i in active {
                if mask.is_none_or(|m| m.allows(o, i)) {
                    gw[i] += g;
                }
            }
        }
    }

    /// Row-wise forward over a `[tokens x in]` matrix.
    pub fn forward_rows(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        for t in 0..x.rows() {
            let y = self.forward_with_mask(x.row(t), self.mask.as_ref());
            out.row_mut(t).copy_from_slice(&y);
        }
        out
    }

    /// Row-wise backward matching [`DenseLayer::forward_rows`].
    pub fn backward_rows(&self, x: &Matrix, d_out: &Matrix, grad: &mut DenseLayer) -> Matrix {
        let mut d_in = Matrix::zeros(x.rows(), self.in_dim());
        for t in 0..x.rows() {
            let d = self.backward(x.row(t), d_out.row(t), self.mask.as_ref(), grad);
            d_in.row_mut(t).copy_from_slice(&d);
        }
        d_in
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}
