//! Reverse-mode gradients of a small conv -> batch norm -> swish -> pool
//! graph checked against central finite differences.

use eabn::tensor::{ConvSpec, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar objective of the input batch and the conv weight.
fn objective(g: &mut Graph<f64>, x: Var, w: Var, spec: &ConvSpec) -> eabn::Result<Var> {
    let c = spec.out_channels;
    let y = g.conv2d(x, w, None, spec)?;
    let gamma = g.input(Tensor::full(&[c], 1.3));
    let beta = g.input(Tensor::full(&[c], -0.2));
    let y = g.batch_norm(y, gamma, beta, None, true)?;
    let y = g.swish(y);
    let y = g.global_avg_pool(y)?;
    let y = g.mul(y, y)?;
    Ok(g.sum(y))
}

fn value(x: &Tensor<f64>, w: &Tensor<f64>, spec: &ConvSpec) -> f64 {
    let mut g = Graph::new();
    let (xv, wv) = (g.input(x.clone()), g.input(w.clone()));
    let out = objective(&mut g, xv, wv, spec).unwrap();
    g.value(out).item()
}

fn main() -> eabn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = ConvSpec::new(2, 3, 3).stride(2);
    let x = random(&mut rng, &[2, 2, 7, 9]);
    let w = random(&mut rng, &spec.weight_shape());

    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), true);
    let wv = g.leaf(w.clone(), true);
    let out = objective(&mut g, xv, wv, &spec)?;
    g.backward(out)?;
    let analytic = g.grad(wv).expect("weight gradient").clone();

    let mut worst = 0.0f64;
    for i in 0..w.numel() {
        let mut plus = w.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = w.clone();
        minus.data_mut()[i] -= STEP;
        let fd = (value(&x, &plus, &spec) - value(&x, &minus, &spec)) / (2.0 * STEP);
        let ad = analytic.data()[i];
        let rel = (ad - fd).abs() / fd.abs().max(1e-8);
        worst = worst.max(rel);
        if i < 5 {
            println!("w[{i}]: autodiff {ad:+.9} finite difference {fd:+.9} rel {rel:.1e}");
        }
    }
    println!("{} weights, worst relative error {worst:.2e}", w.numel());
    Ok(())
}
