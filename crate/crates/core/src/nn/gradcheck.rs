use rand::seq::index::sample;

use super::init::seeded_rng;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference half step.
    pub step: f64,
    /// Parameters checked; all of them when the model is smaller.
    pub samples: usize,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so that near-zero
    /// gradients are compared absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            samples: 300,
            seed: 0,
            floor: 1e-6,
        }
    }
}

/// Maximum relative error between `analytic` and central finite differences
/// of `loss` over a random subsample of the parameters.
pub fn grad_check<P, F>(params: &P, analytic: &P, loss: F, options: &GradCheckOptions) -> Result<f64>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if analytic.tensors().iter().map(|t| t.len()).ne(sizes.iter().copied()) {
        return Err(Error::input("gradient layout does not match the parameters"));
    }
    let total: usize = sizes.iter().sum();
    let chosen: Vec<usize> = if options.samples >= total {
        (0..total).collect()
    } else {
        let mut v = sample(&mut seeded_rng(options.seed), total, options.samples).into_vec();
        v.sort_unstable();
        v
    };

    let analytic = analytic.tensors();
    let mut worst: f64 = 0.0;
    for flat in chosen {
        let (mut tensor, mut offset) = (0, flat);
        while offset >= sizes[tensor] {
            offset -= sizes[tensor];
            tensor += 1;
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            p.tensors_mut()[tensor][offset] += delta;
            let l = loss(&p);
            if l.is_finite() {
                Ok(l)
            } else {
                Err(Error::Numeric(format!("non-finite loss {l} while checking gradients")))
            }
        };
        let numeric = (eval(options.step)? - eval(-options.step)?) / (2.0 * options.step);
        let exact = analytic[tensor][offset];
        let denom = exact.abs().max(numeric.abs()).max(options.floor);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}
