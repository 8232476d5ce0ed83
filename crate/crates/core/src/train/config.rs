use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub mel: f64,
    pub kl: f64,
    pub duration: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mel: 45.0,
            kl: 1.0,
            duration: 1.0,
            adversarial: 1.0,
            feature_matching: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    /// Learning rate is multiplied by this factor after every iteration;
    /// 1.0 keeps it constant.
    pub lr_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Batches whose gradients are summed before one optimizer step.
    pub grad_accumulation: usize,
    pub max_iterations: u64,
    pub seed: u64,
    /// Save every this many iterations (0 saves only at the end).
    pub checkpoint_interval: u64,
    pub weights: LossWeights,
    /// Mix base-corpus utterances into fine-tuning batches.
    pub replay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 16,
            betas: (0.8, 0.99),
            eps: 1e-9,
            weight_decay: 0.01,
            lr_decay: 0.999875,
            grad_clip: None,
            grad_accumulation: 1,
            max_iterations: 136_000,
            seed: 1234,
            checkpoint_interval: 10_000,
            weights: LossWeights::default(),
            replay: false,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 4,
            max_iterations: 300,
            checkpoint_interval: 100,
            grad_clip: Some(100.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.grad_accumulation == 0 {
            return bad("grad_accumulation must be at least 1");
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        let w = self.weights;
        if [w.mel, w.kl, w.duration, w.adversarial, w.feature_matching]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("loss weights must be finite and >= 0");
        }
        Ok(())
    }

    /// Learning rate in effect at `iteration` (0-based).
    pub fn lr_at(&self, iteration: u64) -> f64 {
        self.learning_rate * self.lr_decay.powf(iteration as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_validation() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.learning_rate, 2e-4);
        assert_eq!(c.batch_size, 16);
        let mut bad = c.clone();
        bad.weights.kl = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.batch_size = 0;
        assert!(bad.validate().is_err());
        assert!((TrainConfig::default().lr_at(2) - 2e-4 * 0.999875f64.powi(2)).abs() < 1e-18);
    }
}
