//! Training configuration file (TOML). Relative paths resolve against the
//! directory holding the config file.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! protocol = "toy/protocol.txt"
//! features = "toy/features"
//! feature = "lfcc"
//!
//! [model]
//! backbone = "a0"
//!
//! [schedule]
//! epochs = 40
//! batch_size = 64
//! warmup_steps = 1000
//!
//! [output]
//! dir = "run"
//! ```

use std::path::{Path, PathBuf};

use super::optim::AdamConfig;
use crate::error::{Error, Result};
use crate::features::{AugmentPolicy, FeatureKind};
use crate::losses::LossWeights;
use crate::model::Backbone;

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub protocol: PathBuf,
    /// Directory of `<utt_id>__<segment>.feat` files.
    pub features: PathBuf,
    pub feature: FeatureKind,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: Backbone,
    /// Per-row mean/std normalisation fitted on the training features.
    pub input_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: Backbone::EfficientNetA0,
            input_norm: true,
        }
    }
}

/// Loss weights; class weights default to inverse training frequencies.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_ab: f64,
    pub lambda_focal: f64,
    pub margin: f64,
    pub focal_gamma: f64,
    pub focal_alpha: Option<[f64; 2]>,
    pub ce_weights: Option<[f64; 2]>,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        LossConfig {
            lambda_ab: w.lambda_ab,
            lambda_focal: w.lambda_focal,
            margin: w.margin,
            focal_gamma: w.focal_gamma,
            focal_alpha: None,
            ce_weights: None,
        }
    }
}

impl LossConfig {
    /// Concrete weights given training class counts (spoof, bonafide).
    pub fn weights(&self, counts: [usize; 2]) -> Result<LossWeights> {
        let derived = LossWeights::for_counts(counts)?;
        let w = LossWeights {
            lambda_ab: self.lambda_ab,
            lambda_focal: self.lambda_focal,
            margin: self.margin,
            focal_gamma: self.focal_gamma,
            focal_alpha: self.focal_alpha.unwrap_or(derived.focal_alpha),
            ce_weights: self.ce_weights.unwrap_or(derived.ce_weights),
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig {
            peak_lr: 1e-3,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            clip_norm: 5.0,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            epochs: 40,
            batch_size: 64,
            warmup_steps: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Online SpecAugment on training segments, redrawn every epoch.
    pub enabled: bool,
    pub probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            probability: 0.25,
        }
    }
}

impl AugmentConfig {
    pub fn policy(&self, kind: FeatureKind, seed: u64) -> AugmentPolicy {
        if !self.enabled {
            return AugmentPolicy::disabled();
        }
        AugmentPolicy {
            apply_probability: self.probability,
            ..AugmentPolicy::standard(kind, seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Receives `best.ckpt`, `model.toml` and `metrics.tsv`.
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.protocol,
            &mut cfg.data.features,
            &mut cfg.output.dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.epochs == 0 || s.batch_size == 0 || s.warmup_steps == 0 {
            return Err(Error::Config(
                "epochs, batch_size and warmup_steps must be >= 1".into(),
            ));
        }
        let o = &self.optimizer;
        o.adam().validate()?;
        if !(o.peak_lr > 0.0) || !(o.clip_norm > 0.0) {
            return Err(Error::Config("peak_lr and clip_norm must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.augment.probability) {
            return Err(Error::Config(
                "augment probability must lie in [0, 1]".into(),
            ));
        }
        self.loss.weights([1, 1]).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
protocol = "p.txt"
features = "feats"
feature = "lfcc"

[output]
dir = "run"
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = TrainConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.schedule.epochs, 40);
        assert_eq!(c.optimizer.peak_lr, 1e-3);
        assert_eq!(c.optimizer.beta2, 0.98);
        assert_eq!(c.model.backbone, Backbone::EfficientNetA0);
        assert_eq!(TrainConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_values_rejected() {
        let zero_epochs = format!("{MINIMAL}\n[schedule]\nepochs = 0\n");
        assert!(TrainConfig::parse(&zero_epochs).is_err());
        let unknown = format!("{MINIMAL}\n[schedule]\nepoch = 3\n");
        assert!(TrainConfig::parse(&unknown).is_err());
        assert!(TrainConfig::parse("[data]\nprotocol = 1\n").is_err());
    }

    #[test]
    fn derived_class_weights() {
        let w = LossConfig::default().weights([1800, 200]).unwrap();
        assert_eq!(w.ce_weights, [1.0, 9.0]);
        assert!((w.focal_alpha[0] - 0.2).abs() < 1e-12);
    }
}
