//! The two-branch network: an attention branch produces a spatial mask
//! `g(x)` and an auxiliary prediction, and a compact perception branch
//! classifies the attended map `(1 + g(x)) * x` through a 256-d embedding.

mod attention;
pub mod budget;
mod config;
mod efficientnet;
mod layers;
mod perception;
mod res2net;

pub use attention::{apply_mask, AttentionBranch, AttentionVars, BasicBlock, ATTENTION_WIDTHS};
pub use budget::Trace;
pub use config::{
    round_width, scale_config, scale_unchecked, Backbone, BackboneConfig, BlockKind, ScalingParams,
    StageConfig, A0_HEAD_CHANNELS, A0_SCALING, EMBEDDING_DIM, MIN_WIDTH,
};
pub use efficientnet::{MbConv, SE_RATIO};
pub use layers::{Activation, BatchNorm, Builder, Conv, ConvBn, Ctx, Linear, SqueezeExcite};
pub use perception::PerceptionBranch;
pub use res2net::{Res2NetDims, SeRes2NetBlock, SE_REDUCTION};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::tensor::{Float, ParamId, ParamStore, Tensor, Var};

/// Class index of spoofed speech in every two-way output.
pub const SPOOF: usize = 0;
/// Class index of genuine speech.
pub const BONAFIDE: usize = 1;

/// Parameter-name prefixes owned by the network (as opposed to the loss).
pub const MODEL_PREFIXES: [&str; 2] = ["attention.", "perception."];

/// Graph handles for one forward pass over a batch.
#[derive(Clone, Copy, Debug)]
pub struct EabnVars {
    pub mask: Var,
    pub ab_logits: Var,
    pub ab_probs: Var,
    pub masked_input: Var,
    pub embedding: Var,
    pub pb_logits: Var,
    pub pb_probs: Var,
}

/// Layer structure of the full model. Weights live in a [`ParamStore`];
/// the same structure drives forward passes in any precision.
#[derive(Clone, Debug)]
pub struct EabnModel {
    input_hw: (usize, usize),
    attention: AttentionBranch,
    perception: PerceptionBranch,
    input_mean: ParamId,
    input_scale: ParamId,
}

impl EabnModel {
    /// Registers all weights in `store`, initialised from `seed`.
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        backbone: &BackboneConfig,
        input_hw: (usize, usize),
        seed: u64,
    ) -> Result<Self> {
        let mut b = Builder::new(store, seed);
        let attention = AttentionBranch::new(&mut b, "attention")?;
        let perception = PerceptionBranch::new(&mut b, "perception", backbone)?;
        let input_mean = b.buffer("input.mean", &[input_hw.0], 0.0);
        let input_scale = b.buffer("input.scale", &[input_hw.0], 1.0);
        let model = EabnModel {
            input_hw,
            attention,
            perception,
            input_mean,
            input_scale,
        };
        model.trace(input_hw)?;
        Ok(model)
    }

    pub fn for_features<T: Float>(
        store: &mut ParamStore<T>,
        backbone: &BackboneConfig,
        kind: FeatureKind,
        seed: u64,
    ) -> Result<Self> {
        Self::new(store, backbone, kind.dims(), seed)
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.input_hw
    }

    pub fn attention(&self) -> &AttentionBranch {
        &self.attention
    }

    pub fn perception(&self) -> &PerceptionBranch {
        &self.perception
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<EabnVars> {
        let att = self.attention.forward(ctx, x)?;
        let masked_input = apply_mask(ctx.graph, x, att.mask)?;
        let (embedding, pb_logits) = self.perception.forward(ctx, masked_input)?;
        let pb_probs = ctx.graph.softmax(pb_logits, 1)?;
        Ok(EabnVars {
            mask: att.mask,
            ab_logits: att.logits,
            ab_probs: att.probs,
            masked_input,
            embedding,
            pb_logits,
            pb_probs,
        })
    }

    /// Stacks feature maps into `[N, 1, H, W]`, applying the stored
    /// per-row input normalisation.
    pub fn batch_input<T: Float>(
        &self,
        store: &ParamStore<T>,
        feats: &[&FeatureMatrix],
    ) -> Result<Tensor<T>> {
        let (h, w) = self.input_hw;
        if feats.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mean = store.value(self.input_mean).data();
        let scale = store.value(self.input_scale).data();
        let mut data = Vec::with_capacity(feats.len() * h * w);
        for f in feats {
            if (f.rows(), f.cols()) != self.input_hw {
                return Err(Error::shape(format!(
                    "model expects {h}x{w} features, got {}x{} for {}",
                    f.rows(),
                    f.cols(),
                    f.source_id
                )));
            }
            for (r, row) in f.values().chunks(w).enumerate() {
                data.extend(row.iter().map(|&v| (T::cst(v as f64) - mean[r]) * scale[r]));
            }
        }
        Tensor::new(&[feats.len(), 1, h, w], data)
    }

    /// Sets the per-row input normalisation (`(x - mean) / std`).
    pub fn set_input_norm<T: Float>(
        &self,
        store: &mut ParamStore<T>,
        mean: &[f64],
        std: &[f64],
    ) -> Result<()> {
        let rows = self.input_hw.0;
        if mean.len() != rows || std.len() != rows {
            return Err(Error::shape(format!(
                "input normalisation needs {rows} rows"
            )));
        }
        if std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Numerical(
                "input std must be positive and finite".into(),
            ));
        }
        let m: Vec<T> = mean.iter().map(|&v| T::cst(v)).collect();
        let s: Vec<T> = std.iter().map(|&v| T::cst(1.0 / v)).collect();
        store
            .value_mut(self.input_mean)
            .data_mut()
            .copy_from_slice(&m);
        store
            .value_mut(self.input_scale)
            .data_mut()
            .copy_from_slice(&s);
        Ok(())
    }

    /// Structural walk over an `h x w` single-channel input.
    pub fn trace(&self, input_hw: (usize, usize)) -> Result<Trace> {
        let mut t = Trace::new();
        let input = [1, input_hw.0, input_hw.1];
        self.attention.trace(&mut t, input)?;
        self.perception.trace(&mut t, input)?;
        Ok(t)
    }

    /// Trainable scalars in both branches.
    pub fn count_params(&self) -> u64 {
        self.trace(self.input_hw)
            .expect("validated at construction")
            .params
    }

    /// Trainable scalars in the perception branch alone.
    pub fn count_perception_params(&self) -> u64 {
        let mut t = Trace::new();
        self.perception
            .trace(&mut t, [1, self.input_hw.0, self.input_hw.1])
            .expect("validated at construction");
        t.params
    }

    pub fn count_flops(&self, input_hw: (usize, usize)) -> Result<u64> {
        Ok(self.trace(input_hw)?.flops)
    }

    /// Human-readable layer listing.
    pub fn describe(&self) -> String {
        let t = self
            .trace(self.input_hw)
            .expect("validated at construction");
        let mut out = format!("EABN input {}x{}\n", self.input_hw.0, self.input_hw.1);
        for l in &t.lines {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(&format!("parameters {}\nflops {}\n", t.params, t.flops));
        out
    }
}
