use super::budget::{Shape, Trace, FLOPS_RELU};
use super::layers::{Activation, Builder, ConvBn, Ctx, SqueezeExcite};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Float, Var};

pub const SE_REDUCTION: usize = 16;

/// Shape of one SE-Res2Net bottleneck.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Res2NetDims {
    pub in_channels: usize,
    /// Width after the 1x1 reduction; split into `scale` groups.
    pub bottleneck: usize,
    pub out_channels: usize,
    pub scale: usize,
    pub stride: usize,
    /// `None` drops the squeeze-excitation gate (plain Res2Net).
    pub se_reduction: Option<usize>,
}

/// 1x1 reduce, split into `scale` groups, hierarchical 3x3 convs (each group
/// after the first adds the previous group's output before its conv; the
/// last group passes through), concat, 1x1 expand, SE gate, residual add.
///
/// The first block of a stage (stride or width change) convolves every
/// group independently instead, since its groups must all be resampled.
#[derive(Clone, Debug)]
pub struct SeRes2NetBlock {
    dims: Res2NetDims,
    reduce: ConvBn,
    convs: Vec<ConvBn>,
    hierarchical: bool,
    expand: ConvBn,
    se: Option<SqueezeExcite>,
    shortcut: Option<ConvBn>,
}

impl SeRes2NetBlock {
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, dims: Res2NetDims) -> Result<Self> {
        let Res2NetDims {
            in_channels,
            bottleneck,
            out_channels,
            scale,
            stride,
            se_reduction,
        } = dims;
        if scale == 0 || bottleneck == 0 || bottleneck % scale != 0 {
            return Err(Error::invalid(format!(
                "bottleneck width {bottleneck} is not divisible into {scale} groups"
            )));
        }
        let width = bottleneck / scale;
        let resamples = stride != 1 || in_channels != out_channels;
        let hierarchical = !resamples;
        let n_convs = if scale == 1 || resamples {
            scale
        } else {
            scale - 1
        };
        let reduce = ConvBn::new(
            b,
            &format!("{name}.reduce"),
            ConvSpec::new(in_channels, bottleneck, 1),
            Activation::Relu,
        )?;
        let convs = (0..n_convs)
            .map(|i| {
                ConvBn::new(
                    b,
                    &format!("{name}.group{i}"),
                    ConvSpec::new(width, width, 3).stride(stride),
                    Activation::Relu,
                )
            })
            .collect::<Result<_>>()?;
        let expand = ConvBn::new(
            b,
            &format!("{name}.expand"),
            ConvSpec::new(bottleneck, out_channels, 1),
            Activation::Identity,
        )?;
        let se = se_reduction.map(|r| {
            let squeeze = (out_channels / r.max(1)).max(1);
            SqueezeExcite::new(
                b,
                &format!("{name}.se"),
                out_channels,
                squeeze,
                Activation::Relu,
            )
        });
        let shortcut = if resamples {
            Some(ConvBn::new(
                b,
                &format!("{name}.shortcut"),
                ConvSpec::new(in_channels, out_channels, 1).stride(stride),
                Activation::Identity,
            )?)
        } else {
            None
        };
        Ok(SeRes2NetBlock {
            dims,
            reduce,
            convs,
            hierarchical,
            expand,
            se,
            shortcut,
        })
    }

    pub fn dims(&self) -> Res2NetDims {
        self.dims
    }

    pub fn expand_layer(&self) -> &ConvBn {
        &self.expand
    }

    pub fn se(&self) -> Option<&SqueezeExcite> {
        self.se.as_ref()
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let c_in = ctx.graph.shape(x).get(1).copied().unwrap_or(0);
        if c_in != self.dims.in_channels {
            return Err(Error::shape(format!(
                "res2net block expects {} channels, got {c_in}",
                self.dims.in_channels
            )));
        }
        let width = self.dims.bottleneck / self.dims.scale;
        let h = self.reduce.forward(ctx, x)?;
        let mut outs = Vec::with_capacity(self.dims.scale);
        let mut prev: Option<Var> = None;
        for (i, conv) in self.convs.iter().enumerate() {
            let mut g = ctx.graph.slice_channels(h, i * width, width)?;
            if let (true, Some(p)) = (self.hierarchical, prev) {
                g = ctx.graph.add(g, p)?;
            }
            let y = conv.forward(ctx, g)?;
            outs.push(y);
            prev = Some(y);
        }
        if self.convs.len() < self.dims.scale {
            let last = self.dims.scale - 1;
            outs.push(ctx.graph.slice_channels(h, last * width, width)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            ctx.graph.concat_channels(&outs)?
        };
        let mut y = self.expand.forward(ctx, cat)?;
        if let Some(se) = &self.se {
            y = se.forward(ctx, y)?;
        }
        let skip = match &self.shortcut {
            Some(s) => s.forward(ctx, x)?,
            None => x,
        };
        let sum = ctx.graph.add(y, skip)?;
        Ok(ctx.graph.relu(sum))
    }

    pub(crate) fn trace(&self, t: &mut Trace, input: Shape) -> Result<Shape> {
        let h = self.reduce.trace(t, input)?;
        let width = self.dims.bottleneck / self.dims.scale;
        let mut group_out = [width, h[1], h[2]];
        for (i, conv) in self.convs.iter().enumerate() {
            if self.hierarchical && i > 0 {
                t.elementwise(1, [width, h[1], h[2]]);
            }
            group_out = conv.trace(t, [width, h[1], h[2]])?;
        }
        let cat = [self.dims.bottleneck, group_out[1], group_out[2]];
        let out = self.expand.trace(t, cat)?;
        if let Some(se) = &self.se {
            se.trace(t, out);
        }
        if let Some(s) = &self.shortcut {
            s.trace(t, input)?;
        }
        t.elementwise(1 + FLOPS_RELU, out);
        t.line("residual add +relu".into());
        Ok(out)
    }
}
