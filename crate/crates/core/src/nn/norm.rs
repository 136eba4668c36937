use super::matrix::Matrix;
use super::Parameters;

/// Added to the variance before the square root.
pub const LAYER_NORM_EPS: f64 = 1e-10;

/// Per-row normalisation to zero mean and unit variance, then `gain * x + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gain: vec![1.0; width],
            shift: vec![0.0; width],
        }
    }

    /// The affine-free normalisation of one vector.
    pub fn normalize(x: &[f64]) -> (Vec<f64>, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        (x.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let mut normalized = Matrix::zeros(x.rows(), x.cols());
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for t in 0..x.rows() {
            let (xhat, s) = Self::normalize(x.row(t));
            inv_std.push(s);
            let y = out.row_mut(t);
            for (j, v) in xhat.iter().enumerate() {
                y[j] = self.gain[j] * v + self.shift[j];
            }
            normalized.row_mut(t).copy_from_slice(&xhat);
        }
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, d_out: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let width = d_out.cols();
        let n = width as f64;
        let mut d_in = Matrix::zeros(d_out.rows(), width);
        for t in 0..d_out.rows() {
            let xhat = cache.normalized.row(t);
            let dy = d_out.row(t);
            let mut dxhat = vec![0.0; width];
            for j in 0..width {
                grad.gain[j] += dy[j] * xhat[j];
                grad.shift[j] += dy[j];
                dxhat[j] = dy[j] * self.gain[j];
            }
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
            let s = cache.inv_std[t];
            for (j, d) in d_in.row_mut(t).iter_mut().enumerate() {
                *d = s * (dxhat[j] - mean_d - xhat[j] * mean_dx);
            }
        }
        d_in
    }
}

impl Parameters for LayerNorm {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.gain, &self.shift]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gain, &mut self.shift]
    }
}
