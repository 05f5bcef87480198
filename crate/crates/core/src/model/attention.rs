use super::budget::{Shape, Trace, FLOPS_MASK, FLOPS_SIGMOID, FLOPS_SOFTMAX};
use super::layers::{Activation, Builder, Conv, ConvBn, Ctx};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Float, Graph, Var};

/// Channel widths after each basic block.
pub const ATTENTION_WIDTHS: [usize; 4] = [2, 4, 8, 16];

/// Two 3x3 conv + BN + ReLU layers; the first sets the channel count.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    first: ConvBn,
    second: ConvBn,
}

impl BasicBlock {
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(BasicBlock {
            first: ConvBn::new(
                b,
                &format!("{name}.0"),
                ConvSpec::new(cin, cout, 3),
                Activation::Relu,
            )?,
            second: ConvBn::new(
                b,
                &format!("{name}.1"),
                ConvSpec::new(cout, cout, 3),
                Activation::Relu,
            )?,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let h = self.first.forward(ctx, x)?;
        self.second.forward(ctx, h)
    }

    fn trace(&self, t: &mut Trace, input: Shape) -> Result<Shape> {
        let h = self.first.trace(t, input)?;
        self.second.trace(t, h)
    }
}

/// Attention branch outputs for a batch.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    /// `[N, 16, H, W]` after the last basic block.
    pub features: Var,
    /// `[N, 1, H, W]`, values in `[0, 1]`.
    pub mask: Var,
    /// `[N, 2]` pooled class scores before the softmax.
    pub logits: Var,
    pub probs: Var,
}

/// Full-resolution CNN that produces the attention mask and an auxiliary
/// class prediction.
#[derive(Clone, Debug)]
pub struct AttentionBranch {
    blocks: Vec<BasicBlock>,
    mask_head: Conv,
    class_head: Conv,
}

impl AttentionBranch {
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut cin = 1;
        for (i, &cout) in ATTENTION_WIDTHS.iter().enumerate() {
            blocks.push(BasicBlock::new(b, &format!("{name}.block{i}"), cin, cout)?);
            cin = cout;
        }
        Ok(AttentionBranch {
            blocks,
            mask_head: Conv::new(
                b,
                &format!("{name}.mask_head"),
                ConvSpec::new(cin, 1, 1).bias(true),
            )?,
            class_head: Conv::new(
                b,
                &format!("{name}.class_head"),
                ConvSpec::new(cin, 2, 1).bias(true),
            )?,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<AttentionVars> {
        let shape = ctx.graph.shape(x);
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::shape(format!(
                "attention branch needs a single-channel [N, 1, H, W] input, got {shape:?}"
            )));
        }
        let mut h = x;
        for block in &self.blocks {
            h = block.forward(ctx, h)?;
        }
        let mask_logit = self.mask_head.forward(ctx, h)?;
        let mask = ctx.graph.sigmoid(mask_logit);
        let class_map = self.class_head.forward(ctx, h)?;
        let logits = ctx.graph.global_avg_pool(class_map)?;
        let probs = ctx.graph.softmax(logits, 1)?;
        Ok(AttentionVars {
            features: h,
            mask,
            logits,
            probs,
        })
    }

    pub(crate) fn trace(&self, t: &mut Trace, input: Shape) -> Result<()> {
        t.enter(format!("attention branch {input:?}"));
        let mut h = input;
        for (i, block) in self.blocks.iter().enumerate() {
            t.enter(format!("basic block {i}"));
            h = block.trace(t, h)?;
            t.leave();
        }
        let mask = self.mask_head.trace(t, h)?;
        t.elementwise(FLOPS_SIGMOID, mask);
        t.line(format!(
            "mask head conv1x1 {}->1 +sigmoid -> {mask:?}",
            h[0]
        ));
        let class = self.class_head.trace(t, h)?;
        t.pool(class);
        t.flops(2 * FLOPS_SOFTMAX);
        t.line(format!(
            "class head conv1x1 {}->2, global pool, softmax",
            h[0]
        ));
        t.leave();
        t.elementwise(FLOPS_MASK, input);
        t.line("mask application (1 + g) * x".to_string());
        Ok(())
    }
}

/// `(1 + g) * x` for a feature batch `x` and mask `g` of the same shape.
pub fn apply_mask<T: Float>(g: &mut Graph<T>, x: Var, mask: Var) -> Result<Var> {
    if g.shape(x) != g.shape(mask) {
        return Err(Error::shape(format!(
            "mask shape {:?} does not match input {:?}",
            g.shape(mask),
            g.shape(x)
        )));
    }
    let gain = g.add_scalar(mask, T::one());
    g.mul(gain, x)
}
