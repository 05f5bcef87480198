use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::budget::{Shape, Trace, FLOPS_BN, FLOPS_RELU, FLOPS_SIGMOID, FLOPS_SWISH};
use crate::error::Result;
use crate::tensor::{ConvSpec, Float, Graph, ParamId, ParamStore, RunningStats, Tensor, Var};

/// Everything a forward pass needs: the tape, the parameter store (batch
/// norm writes its running statistics back into it) and the mode.
pub struct Ctx<'a, T: Float> {
    pub graph: &'a mut Graph<T>,
    pub params: &'a mut ParamStore<T>,
    pub training: bool,
}

impl<'a, T: Float> Ctx<'a, T> {
    pub fn new(graph: &'a mut Graph<T>, params: &'a mut ParamStore<T>, training: bool) -> Self {
        Ctx {
            graph,
            params,
            training,
        }
    }

    pub(crate) fn bind(&mut self, id: ParamId) -> Var {
        self.graph.param(self.params, id)
    }
}

/// Registers parameters with seeded initial values.
pub struct Builder<'a, T: Float> {
    pub(crate) store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Float> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, seed: u64) -> Self {
        Builder {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Zero-mean Gaussian values, drawn in double precision.
    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> ParamId {
        let dist = Normal::new(0.0, std).expect("finite std");
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.store
            .add(name, Tensor::from_f64(shape, &values).expect("shape"))
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, Tensor::full(shape, T::cst(value)))
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.store
            .add_buffer(name, Tensor::full(shape, T::cst(value)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Swish,
}

impl Activation {
    pub(crate) fn apply<T: Float>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Swish => g.swish(x),
        }
    }

    fn flops(self) -> u64 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => FLOPS_RELU,
            Activation::Swish => FLOPS_SWISH,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "",
            Activation::Relu => "+relu",
            Activation::Swish => "+swish",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub spec: ConvSpec,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv {
    /// He-normal weights, zero bias.
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, spec: ConvSpec) -> Result<Self> {
        spec.validate()?;
        let [_, cin_g, kh, kw] = spec.weight_shape();
        let std = (2.0 / (cin_g * kh * kw) as f64).sqrt();
        let weight = b.normal(&format!("{name}.weight"), &spec.weight_shape(), std);
        let bias = spec
            .bias
            .then(|| b.constant(&format!("{name}.bias"), &[spec.out_channels], 0.0));
        Ok(Conv { spec, weight, bias })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let w = ctx.bind(self.weight);
        let b = self.bias.map(|id| ctx.bind(id));
        ctx.graph.conv2d(x, w, b, &self.spec)
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn trace(&self, t: &mut Trace, input: Shape) -> Result<Shape> {
        t.conv(&self.spec, input)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    channels: usize,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: b.constant(&format!("{name}.gamma"), &[channels], 1.0),
            beta: b.constant(&format!("{name}.beta"), &[channels], 0.0),
            running_mean: b.buffer(&format!("{name}.running_mean"), &[channels], 0.0),
            running_var: b.buffer(&format!("{name}.running_var"), &[channels], 1.0),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let gamma = ctx.bind(self.gamma);
        let beta = ctx.bind(self.beta);
        let (mean, var) = ctx.params.pair_mut(self.running_mean, self.running_var);
        ctx.graph.batch_norm(
            x,
            gamma,
            beta,
            Some(RunningStats { mean, var }),
            ctx.training,
        )
    }

    pub fn gamma(&self) -> ParamId {
        self.gamma
    }

    pub fn params(&self) -> usize {
        2 * self.channels
    }
}

/// Convolution, batch norm, activation.
#[derive(Clone, Debug)]
pub struct ConvBn {
    pub conv: Conv,
    pub bn: BatchNorm,
    pub act: Activation,
}

impl ConvBn {
    pub fn new<T: Float>(
        b: &mut Builder<T>,
        name: &str,
        spec: ConvSpec,
        act: Activation,
    ) -> Result<Self> {
        let bn = BatchNorm::new(b, &format!("{name}.bn"), spec.out_channels);
        Ok(ConvBn {
            conv: Conv::new(b, &format!("{name}.conv"), spec)?,
            bn,
            act,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let h = self.conv.forward(ctx, x)?;
        let h = self.bn.forward(ctx, h)?;
        Ok(self.act.apply(ctx.graph, h))
    }

    pub fn trace(&self, t: &mut Trace, input: Shape) -> Result<Shape> {
        let s = &self.conv.spec;
        let out = t.conv(s, input)?;
        t.params(self.bn.params() as u64);
        t.elementwise(FLOPS_BN + self.act.flops(), out);
        t.line(format!(
            "conv{}x{} {}->{} stride {:?} groups {}{} -> {:?}",
            s.kernel.0,
            s.kernel.1,
            s.in_channels,
            s.out_channels,
            s.stride,
            s.groups,
            self.act.name(),
            out
        ));
        Ok(out)
    }
}

/// Fully connected layer on `[N, D]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    /// LeCun-normal weights, zero bias.
    pub fn new<T: Float>(b: &mut Builder<T>, name: &str, inputs: usize, outputs: usize) -> Self {
        let std = (1.0 / inputs as f64).sqrt();
        Linear {
            inputs,
            outputs,
            weight: b.normal(&format!("{name}.weight"), &[inputs, outputs], std),
            bias: b.constant(&format!("{name}.bias"), &[outputs], 0.0),
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let w = ctx.bind(self.weight);
        let b = ctx.bind(self.bias);
        ctx.graph.linear(x, w, Some(b))
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn trace(&self, t: &mut Trace) {
        t.linear(self.inputs, self.outputs);
    }
}

/// Squeeze-and-excitation: global pool, bottleneck MLP, sigmoid channel gate.
#[derive(Clone, Debug)]
pub struct SqueezeExcite {
    reduce: Linear,
    expand: Linear,
    act: Activation,
}

impl SqueezeExcite {
    pub fn new<T: Float>(
        b: &mut Builder<T>,
        name: &str,
        channels: usize,
        squeeze: usize,
        act: Activation,
    ) -> Self {
        SqueezeExcite {
            reduce: Linear::new(b, &format!("{name}.reduce"), channels, squeeze),
            expand: Linear::new(b, &format!("{name}.expand"), squeeze, channels),
            act,
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<T>, x: Var) -> Result<Var> {
        let pooled = ctx.graph.global_avg_pool(x)?;
        let h = self.reduce.forward(ctx, pooled)?;
        let h = self.act.apply(ctx.graph, h);
        let h = self.expand.forward(ctx, h)?;
        let gate = ctx.graph.sigmoid(h);
        ctx.graph.scale_channels(x, gate)
    }

    pub fn expand(&self) -> &Linear {
        &self.expand
    }

    pub fn trace(&self, t: &mut Trace, input: Shape) {
        let [c, _, _] = input;
        let squeeze = self.reduce.outputs;
        t.pool(input);
        self.reduce.trace(t);
        t.flops(squeeze as u64 * self.act.flops());
        self.expand.trace(t);
        t.flops(c as u64 * FLOPS_SIGMOID);
        t.elementwise(1, input);
        t.line(format!("squeeze-excite {c}->{squeeze}->{c}"));
    }
}
