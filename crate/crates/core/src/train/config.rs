use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training recipe. Every field has a default, so a config file only needs
/// the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of all optimizer steps spent warming up.
    pub warmup_fraction: f64,
    /// Fraction of all optimizer steps after which the rate drops to `post_step_lr`.
    pub step_fraction: f64,
    pub post_step_lr: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
    pub flip_probability: f64,
    pub noise_sigma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub folds: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 350,
            batch_size: 512,
            warmup_fraction: 0.4,
            step_fraction: 0.8,
            post_step_lr: 1e-4,
            weight_decay: 1e-4,
            label_smoothing: 0.1,
            dropout: 0.3,
            flip_probability: 0.5,
            noise_sigma: 0.03,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            folds: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Parses flat `key = value` text; omitted keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(0.0 < self.warmup_fraction && self.warmup_fraction < self.step_fraction && self.step_fraction <= 1.0) {
            return fail(format!(
                "need 0 < warmup_fraction ({}) < step_fraction ({}) <= 1",
                self.warmup_fraction, self.step_fraction
            ));
        }
        let rates = [
            ("post_step_lr", self.post_step_lr),
            ("weight_decay", self.weight_decay),
            ("label_smoothing", self.label_smoothing),
            ("dropout", self.dropout),
            ("flip_probability", self.flip_probability),
            ("noise_sigma", self.noise_sigma),
            ("adam_eps", self.adam_eps),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return fail(format!("{name} must be non-negative, got {v}"));
        }
        if self.dropout >= 1.0 || self.label_smoothing > 1.0 || self.flip_probability > 1.0 {
            return fail("dropout must be < 1; label_smoothing and flip_probability at most 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must lie in [0, 1)".into());
        }
        if self.folds == 0 || !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return fail("folds must be positive and val_fraction in (0, 1)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_only_named_keys() {
        let c = TrainConfig::from_toml("epochs = 40\nbatch_size = 32\n").unwrap();
        assert_eq!((c.epochs, c.batch_size), (40, 32));
        assert_eq!(c.label_smoothing, 0.1);
        assert_eq!(c.beta2, 0.98);
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
        assert!(TrainConfig::from_toml("warmup_fraction = 0.9").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}
