use super::budget::{Shape, Trace};
use super::config::{BackboneConfig, BlockKind};
use super::efficientnet::MbConv;
use super::layers::{Activation, Builder, ConvBn, Ctx, Linear};
use super::res2net::{Res2NetDims, SeRes2NetBlock, SE_REDUCTION};
use crate::error::Result;
use crate::tensor::{ConvSpec, Float, Var};

#[derive(Clone, Debug)]
enum Block {
    MbConv(MbConv),
    SeRes2Net(SeRes2NetBlock),
}

/// Backbone, global pooling, 256-d embedding and a two-way classifier.
#[derive(Clone, Debug)]
pub struct PerceptionBranch {
    config: BackboneConfig,
    stem: ConvBn,
    blocks: Vec<Block>,
    head: Option<ConvBn>,
    embed: Linear,
    classifier: Linear,
}

impl PerceptionBranch {
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let uses_mbconv = config.stages.iter().any(|s| s.block == BlockKind::MbConv);
        let act = if uses_mbconv {
            Activation::Swish
        } else {
            Activation::Relu
        };
        let stem = ConvBn::new(
            b,
            &format!("{name}.stem"),
            ConvSpec::new(1, config.stem_channels, 3).stride(2),
            act,
        )?;
        let mut blocks = Vec::new();
        let mut cin = config.stem_channels;
        for (si, stage) in config.stages.iter().enumerate() {
            for r in 0..stage.repeats {
                let stride = if r == 0 { stage.stride } else { 1 };
                let bname = format!("{name}.stage{si}.{r}");
                let block = match stage.block {
                    BlockKind::MbConv => Block::MbConv(MbConv::new(b, &bname, cin, stage, stride)?),
                    BlockKind::SeRes2Net { scale, base_width } => {
                        let planes = stage.channels / stage.expansion;
                        let width = (planes * base_width / 64).max(1);
                        Block::SeRes2Net(SeRes2NetBlock::new(
                            b,
                            &bname,
                            Res2NetDims {
                                in_channels: cin,
                                bottleneck: width * scale,
                                out_channels: stage.channels,
                                scale,
                                stride,
                                se_reduction: Some(SE_REDUCTION),
                            },
                        )?)
                    }
                };
                blocks.push(block);
                cin = stage.channels;
            }
        }
        let head = match config.head_channels {
            Some(h) => {
                let conv = ConvBn::new(b, &format!("{name}.head"), ConvSpec::new(cin, h, 1), act)?;
                cin = h;
                Some(conv)
            }
            None => None,
        };
        Ok(PerceptionBranch {
            config: config.clone(),
            stem,
            blocks,
            head,
            embed: Linear::new(b, &format!("{name}.embed"), cin, config.embedding_dim),
            classifier: Linear::new(b, &format!("{name}.classifier"), config.embedding_dim, 2),
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    /// Returns `(embedding [N, 256], logits [N, 2])`.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<(Var, Var)> {
        let mut h = self.stem.forward(ctx, x)?;
        if self.config.stem_pool {
            h = ctx.graph.max_pool(h, (2, 2), (2, 2))?;
        }
        for block in &self.blocks {
            h = match block {
                Block::MbConv(m) => m.forward(ctx, h)?,
                Block::SeRes2Net(r) => r.forward(ctx, h)?,
            };
        }
        if let Some(head) = &self.head {
            h = head.forward(ctx, h)?;
        }
        let pooled = ctx.graph.global_avg_pool(h)?;
        let embedding = self.embed.forward(ctx, pooled)?;
        let logits = self.classifier.forward(ctx, embedding)?;
        Ok((embedding, logits))
    }

    pub(crate) fn trace(&self, t: &mut Trace, input: Shape) -> Result<()> {
        t.enter(format!("perception branch {input:?}"));
        let mut h = self.stem.trace(t, input)?;
        if self.config.stem_pool {
            t.pool(h);
            h = [h[0], h[1] / 2, h[2] / 2];
            t.line(format!("max pool 2x2 -> {h:?}"));
        }
        let mut bi = 0;
        for (si, stage) in self.config.stages.iter().enumerate() {
            t.enter(format!(
                "stage {si}: {:?} expansion {} kernel {} channels {} repeats {} stride {}",
                stage.block,
                stage.expansion,
                stage.kernel,
                stage.channels,
                stage.repeats,
                stage.stride
            ));
            for _ in 0..stage.repeats {
                h = match &self.blocks[bi] {
                    Block::MbConv(m) => m.trace(t, h)?,
                    Block::SeRes2Net(r) => r.trace(t, h)?,
                };
                bi += 1;
            }
            t.leave();
        }
        if let Some(head) = &self.head {
            h = head.trace(t, h)?;
        }
        t.pool(h);
        self.embed.trace(t);
        t.line(format!(
            "global pool, linear {}->{} (embedding)",
            h[0], self.embed.outputs
        ));
        self.classifier.trace(t);
        t.flops(2 * super::budget::FLOPS_SOFTMAX);
        t.line(format!("linear {}->2, softmax", self.embed.outputs));
        t.leave();
        Ok(())
    }
}
