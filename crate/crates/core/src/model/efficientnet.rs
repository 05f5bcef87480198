use super::budget::{Shape, Trace};
use super::config::StageConfig;
use super::layers::{Activation, Builder, ConvBn, Ctx, SqueezeExcite};
use crate::error::Result;
use crate::tensor::{ConvSpec, Float, Var};

/// Squeeze width as a fraction of the block input width.
pub const SE_RATIO: f64 = 0.25;

/// Inverted residual block: optional 1x1 expansion, depthwise conv,
/// squeeze-excitation, linear 1x1 projection, identity skip when shapes allow.
#[derive(Clone, Debug)]
pub struct MbConv {
    expand: Option<ConvBn>,
    depthwise: ConvBn,
    se: SqueezeExcite,
    project: ConvBn,
    residual: bool,
}

impl MbConv {
    pub fn new<T: Float>(
        b: &mut Builder<T>,
        name: &str,
        cin: usize,
        stage: &StageConfig,
        stride: usize,
    ) -> Result<Self> {
        let hidden = cin * stage.expansion;
        let expand = if stage.expansion == 1 {
            None
        } else {
            Some(ConvBn::new(
                b,
                &format!("{name}.expand"),
                ConvSpec::new(cin, hidden, 1),
                Activation::Swish,
            )?)
        };
        let depthwise = ConvBn::new(
            b,
            &format!("{name}.depthwise"),
            ConvSpec::new(hidden, hidden, stage.kernel)
                .groups(hidden)
                .stride(stride),
            Activation::Swish,
        )?;
        let squeeze = ((cin as f64 * SE_RATIO) as usize).max(1);
        let se = SqueezeExcite::new(b, &format!("{name}.se"), hidden, squeeze, Activation::Swish);
        let project = ConvBn::new(
            b,
            &format!("{name}.project"),
            ConvSpec::new(hidden, stage.channels, 1),
            Activation::Identity,
        )?;
        Ok(MbConv {
            expand,
            depthwise,
            se,
            project,
            residual: stride == 1 && cin == stage.channels,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let mut h = x;
        if let Some(e) = &self.expand {
            h = e.forward(ctx, h)?;
        }
        h = self.depthwise.forward(ctx, h)?;
        h = self.se.forward(ctx, h)?;
        h = self.project.forward(ctx, h)?;
        if self.residual {
            h = ctx.graph.add(h, x)?;
        }
        Ok(h)
    }

    pub(crate) fn trace(&self, t: &mut Trace, input: Shape) -> Result<Shape> {
        let mut h = input;
        if let Some(e) = &self.expand {
            h = e.trace(t, h)?;
        }
        h = self.depthwise.trace(t, h)?;
        self.se.trace(t, h);
        h = self.project.trace(t, h)?;
        if self.residual {
            t.elementwise(1, h);
            t.line("identity skip".into());
        }
        Ok(h)
    }
}
