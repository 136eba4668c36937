//! Hyperparameters. Defaults follow the published training setup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_ALPHA_GRID: [f64; 7] = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
pub const DEFAULT_BETA_GRID: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25];

/// Minibatch optimisation settings shared by both rerankers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub step_size: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub stabilizer: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 2e-5,
            batch_size: 64,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            stabilizer: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step size must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("moment decay rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadeConfig {
    pub hidden: usize,
    pub n_orderings: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for MadeConfig {
    fn default() -> Self {
        Self {
            hidden: 500,
            n_orderings: 10,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl MadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("MADE hidden width must be positive"));
        }
        if self.n_orderings == 0 {
            return Err(Error::config("at least one ordering is required"));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSaConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward inner width; four times `width` by default.
    pub ffn_width: usize,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for MaskSaConfig {
    fn default() -> Self {
        Self {
            width: 256,
            layers: 6,
            heads: 8,
            ffn_width: 1024,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl MaskSaConfig {
    /// A small encoder: `layers` blocks of `width` with the 4x feed-forward ratio.
    pub fn small(width: usize, layers: usize, heads: usize) -> Self {
        Self {
            width,
            layers,
            heads,
            ffn_width: 4 * width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.ffn_width == 0 {
            return Err(Error::config("Mask-SA dimensions must be positive"));
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "model width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        self.train.validate()
    }
}

/// Candidate count and score-combination weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            alpha: 0.0,
            beta: 0.0,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("alpha and beta must be non-negative and finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_setup() {
        let made = MadeConfig::default();
        assert_eq!((made.hidden, made.n_orderings), (500, 10));
        let sa = MaskSaConfig::default();
        assert_eq!((sa.layers, sa.heads, sa.width, sa.ffn_width), (6, 8, 256, 1024));
        let t = TrainConfig::default();
        assert_eq!((t.epochs, t.batch_size, t.step_size), (30, 64, 2e-5));
        assert_eq!(RerankConfig::default().k, 50);
    }

    #[test]
    fn validation_errors() {
        assert!(RerankConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(MadeConfig { n_orderings: 0, ..Default::default() }.validate().is_err());
        assert!(MaskSaConfig { heads: 3, ..Default::default() }.validate().is_err());
    }
}
