use crate::error::{Error, Result};

/// Reverse compound scaling multipliers: depth, width, resolution.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Multipliers that turn B0 into A0.
pub const A0_SCALING: ScalingParams = ScalingParams {
    alpha: 0.2,
    beta: 0.25,
    gamma: 2.0,
};

impl ScalingParams {
    /// `alpha * beta^2 * gamma^2`.
    pub fn constraint_value(&self) -> f64 {
        self.alpha * self.beta * self.beta * self.gamma * self.gamma
    }

    /// Checks `1/20 <= alpha beta^2 gamma^2 <= 1/16`, `0.2 <= alpha, beta <= 0.6`
    /// and `gamma = 2`.
    pub fn validate(&self) -> Result<f64> {
        const TOL: f64 = 1e-12;
        let v = self.constraint_value();
        if !(1.0 / 20.0 - TOL..=1.0 / 16.0 + TOL).contains(&v) {
            return Err(Error::Config(format!(
                "scaling constraint alpha*beta^2*gamma^2 = {v} outside [1/20, 1/16]"
            )));
        }
        for (name, x) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.2 - TOL..=0.6 + TOL).contains(&x) {
                return Err(Error::Config(format!("{name} = {x} outside [0.2, 0.6]")));
            }
        }
        if (self.gamma - 2.0).abs() > TOL {
            return Err(Error::Config(format!(
                "gamma = {} (expected 2)",
                self.gamma
            )));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockKind {
    /// Inverted residual with depthwise conv and squeeze-excitation.
    MbConv,
    /// Bottleneck with hierarchical group convs (`scale` groups of
    /// `base_width`-derived width) and squeeze-excitation.
    SeRes2Net { scale: usize, base_width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StageConfig {
    pub block: BlockKind,
    /// MBConv expansion ratio, or the bottleneck expansion for Res2Net.
    pub expansion: usize,
    pub kernel: usize,
    /// Output channels of every block in the stage.
    pub channels: usize,
    pub repeats: usize,
    /// Stride of the first block.
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    /// 2x2 max pool after the stem.
    pub stem_pool: bool,
    pub stages: Vec<StageConfig>,
    /// 1x1 conv width before pooling; `None` pools the last stage directly.
    pub head_channels: Option<usize>,
    pub embedding_dim: usize,
}

pub const EMBEDDING_DIM: usize = 256;
pub const MIN_WIDTH: usize = 4;

/// Head width of the A0 perception branch. Scaling B0's 1280 by beta gives
/// 320, which puts the branch at ~195k parameters; 24 brings it to ~95k.
pub const A0_HEAD_CHANNELS: usize = 24;

/// Nearest multiple of [`MIN_WIDTH`], at least [`MIN_WIDTH`].
pub fn round_width(v: f64) -> usize {
    let m = MIN_WIDTH as f64;
    (((v / m + 0.5).floor() * m) as usize).max(MIN_WIDTH)
}

fn mb(
    expansion: usize,
    kernel: usize,
    channels: usize,
    repeats: usize,
    stride: usize,
) -> StageConfig {
    StageConfig {
        block: BlockKind::MbConv,
        expansion,
        kernel,
        channels,
        repeats,
        stride,
    }
}

impl BackboneConfig {
    pub fn efficientnet_b0() -> Self {
        BackboneConfig {
            stem_channels: 32,
            stem_pool: false,
            stages: vec![
                mb(1, 3, 16, 1, 1),
                mb(6, 3, 24, 2, 2),
                mb(6, 5, 40, 2, 2),
                mb(6, 3, 80, 3, 2),
                mb(6, 5, 112, 3, 1),
                mb(6, 5, 192, 4, 2),
                mb(6, 3, 320, 1, 1),
            ],
            head_channels: Some(1280),
            embedding_dim: EMBEDDING_DIM,
        }
    }

    pub fn efficientnet_a0() -> Self {
        let mut cfg =
            scale_config(&Self::efficientnet_b0(), &A0_SCALING).expect("A0 scaling is valid");
        cfg.head_channels = Some(A0_HEAD_CHANNELS);
        cfg
    }

    /// SE-Res2Net50 layout (3/4/6/3 bottlenecks, scale 4, base width 26)
    /// with channel counts reduced to about a million parameters.
    pub fn se_res2net50() -> Self {
        let stage = |planes: usize, repeats, stride| StageConfig {
            block: BlockKind::SeRes2Net {
                scale: 4,
                base_width: 26,
            },
            expansion: 4,
            kernel: 3,
            channels: planes * 4,
            repeats,
            stride,
        };
        BackboneConfig {
            stem_channels: 16,
            stem_pool: true,
            stages: vec![
                stage(12, 3, 1),
                stage(24, 4, 2),
                stage(48, 6, 2),
                stage(96, 3, 2),
            ],
            head_channels: None,
            embedding_dim: EMBEDDING_DIM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim != EMBEDDING_DIM {
            return Err(Error::Config(format!(
                "embedding dim must be {EMBEDDING_DIM}, got {}",
                self.embedding_dim
            )));
        }
        if self.stages.is_empty() {
            return Err(Error::Config("backbone has no stages".into()));
        }
        let widths = std::iter::once(self.stem_channels)
            .chain(self.stages.iter().map(|s| s.channels))
            .chain(self.head_channels);
        for w in widths {
            if w < MIN_WIDTH {
                return Err(Error::Config(format!(
                    "channel count {w} below minimum {MIN_WIDTH}"
                )));
            }
        }
        for s in &self.stages {
            if s.repeats == 0 || s.stride == 0 || s.expansion == 0 || s.kernel % 2 == 0 {
                return Err(Error::Config(format!("invalid stage {s:?}")));
            }
        }
        Ok(())
    }
}

/// Validates the scaling multipliers and applies them to `base`.
pub fn scale_config(base: &BackboneConfig, s: &ScalingParams) -> Result<BackboneConfig> {
    s.validate()?;
    Ok(scale_unchecked(base, s))
}

/// Depth: `ceil(alpha * repeats)`. Width: `round_width(beta * channels)`.
/// Resolution is not resampled; the stride schedule absorbs `gamma`.
pub fn scale_unchecked(base: &BackboneConfig, s: &ScalingParams) -> BackboneConfig {
    let width = |c: usize| round_width(s.beta * c as f64);
    BackboneConfig {
        stem_channels: width(base.stem_channels),
        stem_pool: base.stem_pool,
        stages: base
            .stages
            .iter()
            .map(|st| StageConfig {
                channels: width(st.channels),
                repeats: ((s.alpha * st.repeats as f64 - 1e-9).ceil() as usize).max(1),
                ..*st
            })
            .collect(),
        head_channels: base.head_channels.map(width),
        embedding_dim: base.embedding_dim,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a0_scaling_sits_on_lower_bound() {
        let v = A0_SCALING.validate().unwrap();
        assert!((v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn oversized_scaling_rejected_with_product() {
        let s = ScalingParams {
            alpha: 0.6,
            beta: 0.6,
            gamma: 2.0,
        };
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("0.864"), "{err}");
    }

    #[test]
    fn unit_scaling_is_identity() {
        let unit = ScalingParams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        };
        assert!(unit.validate().is_err());
        let b0 = BackboneConfig::efficientnet_b0();
        assert_eq!(scale_unchecked(&b0, &unit), b0);
    }

    #[test]
    fn a0_stage_table() {
        let a0 = BackboneConfig::efficientnet_a0();
        assert_eq!(a0.stem_channels, 8);
        let widths: Vec<_> = a0.stages.iter().map(|s| s.channels).collect();
        assert_eq!(widths, [4, 8, 12, 20, 28, 48, 80]);
        assert!(a0.stages.iter().all(|s| s.repeats == 1));
        // the four-repeat stage of B0
        assert_eq!(BackboneConfig::efficientnet_b0().stages[5].repeats, 4);
        assert!(a0.validate().is_ok());
    }

    #[test]
    fn width_rounding() {
        assert_eq!(round_width(6.0), 8);
        assert_eq!(round_width(10.0), 12);
        assert_eq!(round_width(1.0), 4);
        assert_eq!(round_width(20.0), 20);
    }
}

/// Backbones selectable by name from configs and the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Backbone {
    #[serde(rename = "a0")]
    EfficientNetA0,
    #[serde(rename = "b0")]
    EfficientNetB0,
    #[serde(rename = "se-res2net50")]
    SeRes2Net50,
}

impl Backbone {
    pub fn name(self) -> &'static str {
        match self {
            Backbone::EfficientNetA0 => "a0",
            Backbone::EfficientNetB0 => "b0",
            Backbone::SeRes2Net50 => "se-res2net50",
        }
    }

    pub fn config(self) -> BackboneConfig {
        match self {
            Backbone::EfficientNetA0 => BackboneConfig::efficientnet_a0(),
            Backbone::EfficientNetB0 => BackboneConfig::efficientnet_b0(),
            Backbone::SeRes2Net50 => BackboneConfig::se_res2net50(),
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a0" | "efficientnet-a0" => Ok(Backbone::EfficientNetA0),
            "b0" | "efficientnet-b0" => Ok(Backbone::EfficientNetB0),
            "se-res2net50" | "res2net" => Ok(Backbone::SeRes2Net50),
            _ => Err(Error::invalid(format!(
                "unknown model {s:?} (expected a0, b0 or se-res2net50)"
            ))),
        }
    }
}
