#![allow(dead_code)]

pub mod e2e;
pub mod op_cases;
pub mod score_oracle;

use eabn::model::{BackboneConfig, BlockKind, StageConfig, EMBEDDING_DIM};
use eabn::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Relative error as used throughout the gradient checks.
pub fn rel_err(autodiff: f64, fd: f64) -> f64 {
    (autodiff - fd).abs() / fd.abs().max(1e-8)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Compares autodiff against central finite differences for a function of
/// several leaf tensors. The scalar objective is `sum(f(inputs) * r)` for a
/// fixed random `r` drawn independently of the inputs, so every output
/// element contributes with a distinct weight. Returns the worst relative
/// error seen.
pub fn gradcheck<F>(inputs: &[Tensor<f64>], seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let objective = |values: &[Tensor<f64>], with_grad: bool| {
        let mut g = Graph::new();
        let vars: Vec<Var> = values
            .iter()
            .map(|t| g.leaf(t.clone(), with_grad))
            .collect();
        let out = f(&mut g, &vars);
        // decorrelated from the input stream: weights that are an affine
        // function of the inputs would be annihilated by normalising ops
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let shape = g.shape(out).to_vec();
        let weights = random_tensor(&mut rng, &shape, 0.5, 1.5);
        let r = g.input(weights);
        let prod = g.mul(out, r).unwrap();
        let loss = g.sum(prod);
        let value = g.value(loss).item();
        let grads = if with_grad {
            g.backward(loss).unwrap();
            vars.iter()
                .map(|&v| {
                    g.grad(v)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(g.shape(v)))
                })
                .collect()
        } else {
            Vec::new()
        };
        (value, grads)
    };

    let (_, analytic) = objective(inputs, true);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let fd = (objective(&plus, false).0 - objective(&minus, false).0) / (2.0 * FD_STEP);
            let err = rel_err(analytic[i].data()[j], fd);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn stage(
    block: BlockKind,
    expansion: usize,
    channels: usize,
    repeats: usize,
    stride: usize,
) -> StageConfig {
    StageConfig {
        block,
        expansion,
        kernel: 3,
        channels,
        repeats,
        stride,
    }
}

/// Two MBConv stages on a 4-channel stem; fast enough for finite differences.
pub fn tiny_mbconv() -> BackboneConfig {
    BackboneConfig {
        stem_channels: 4,
        stem_pool: false,
        stages: vec![
            stage(BlockKind::MbConv, 1, 4, 1, 1),
            stage(BlockKind::MbConv, 2, 8, 2, 2),
        ],
        head_channels: Some(4),
        embedding_dim: EMBEDDING_DIM,
    }
}

/// One SE-Res2Net stage (scale 2) behind a pooled stem.
pub fn tiny_res2net() -> BackboneConfig {
    let block = BlockKind::SeRes2Net {
        scale: 2,
        base_width: 64,
    };
    BackboneConfig {
        stem_channels: 4,
        stem_pool: true,
        stages: vec![stage(block, 4, 8, 2, 1)],
        head_channels: None,
        embedding_dim: EMBEDDING_DIM,
    }
}
