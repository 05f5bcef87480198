//! One gradient-check case per differentiable op. Each case draws its own
//! shapes and values from `rng` and returns the worst relative error.

use super::{gradcheck, random_tensor};
use eabn::model::apply_mask;
use eabn::tensor::{ConvSpec, RunningStats, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;

pub type Case = fn(&mut ChaCha8Rng) -> f64;

pub const CASES: &[(&str, Case)] = &[
    ("conv2d", conv2d),
    ("grouped_conv2d", grouped_conv2d),
    ("batch_norm_training", batch_norm_training),
    ("batch_norm_inference", batch_norm_inference),
    ("relu", |r| activation(r, 0)),
    ("sigmoid", |r| activation(r, 1)),
    ("swish", |r| activation(r, 2)),
    ("softmax", softmax),
    ("global_avg_pool", |r| pooling(r, 0)),
    ("avg_pool", |r| pooling(r, 1)),
    ("max_pool", |r| pooling(r, 2)),
    ("linear", linear),
    ("add", |r| elementwise(r, 0)),
    ("mul", |r| elementwise(r, 1)),
    ("scalar_affine", |r| elementwise(r, 2)),
    ("scale_channels", |r| elementwise(r, 3)),
    ("slice_concat_channels", |r| elementwise(r, 4)),
    ("reshape_mean_sum", |r| elementwise(r, 5)),
    ("apply_mask", mask),
    ("sqdist_gather_min_excluding", metric),
    ("focal_weighted_nll", probability_losses),
];

/// Values bounded away from zero so kinked ops are differentiable at the
/// sample point.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = random_tensor(rng, shape, 0.05, 1.5);
    for v in t.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn conv2d(rng: &mut ChaCha8Rng) -> f64 {
    let (n, cin, cout) = (
        rng.gen_range(1..3),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    let (h, w) = (rng.gen_range(3..7), rng.gen_range(3..7));
    let k = if rng.gen_bool(0.5) { 1 } else { 3 };
    let bias = rng.gen_bool(0.5);
    let spec = ConvSpec::new(cin, cout, k)
        .stride(rng.gen_range(1..3))
        .bias(bias);
    let mut inputs = vec![
        random_tensor(rng, &[n, cin, h, w], -1.0, 1.0),
        random_tensor(rng, &spec.weight_shape(), -1.0, 1.0),
    ];
    if bias {
        inputs.push(random_tensor(rng, &[cout], -1.0, 1.0));
    }
    gradcheck(&inputs, rng.gen(), |g, v| {
        g.conv2d(v[0], v[1], v.get(2).copied(), &spec).unwrap()
    })
}

fn grouped_conv2d(rng: &mut ChaCha8Rng) -> f64 {
    let (groups, mult) = (rng.gen_range(1..4), rng.gen_range(1..3));
    let (h, w) = (rng.gen_range(3..7), rng.gen_range(3..7));
    let k = if rng.gen_bool(0.5) { 3 } else { 5 };
    let spec = ConvSpec::new(groups, groups * mult, k)
        .groups(groups)
        .stride(rng.gen_range(1..3))
        .bias(true);
    let inputs = vec![
        random_tensor(rng, &[2, groups, h, w], -1.0, 1.0),
        random_tensor(rng, &spec.weight_shape(), -1.0, 1.0),
        random_tensor(rng, &[groups * mult], -1.0, 1.0),
    ];
    gradcheck(&inputs, rng.gen(), |g, v| {
        g.conv2d(v[0], v[1], Some(v[2]), &spec).unwrap()
    })
}

fn batch_norm_training(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [
        rng.gen_range(1..4),
        rng.gen_range(1..4),
        rng.gen_range(1..5),
        rng.gen_range(2..5),
    ];
    let c = shape[1];
    let inputs = vec![
        random_tensor(rng, &shape, -2.0, 2.0),
        random_tensor(rng, &[c], 0.5, 1.5),
        random_tensor(rng, &[c], -1.0, 1.0),
    ];
    gradcheck(&inputs, rng.gen(), |g, v| {
        g.batch_norm(v[0], v[1], v[2], None, true).unwrap()
    })
}

fn batch_norm_inference(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [
        rng.gen_range(1..3),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    ];
    let c = shape[1];
    let inputs = vec![
        random_tensor(rng, &shape, -2.0, 2.0),
        random_tensor(rng, &[c], 0.5, 1.5),
        random_tensor(rng, &[c], -1.0, 1.0),
    ];
    let rm = random_tensor(rng, &[c], -0.5, 0.5);
    let rv = random_tensor(rng, &[c], 0.5, 2.0);
    gradcheck(&inputs, rng.gen(), |g, v| {
        let mut mean = rm.data().to_vec();
        let mut var = rv.data().to_vec();
        let running = RunningStats {
            mean: &mut mean,
            var: &mut var,
        };
        g.batch_norm(v[0], v[1], v[2], Some(running), false)
            .unwrap()
    })
}

fn activation(rng: &mut ChaCha8Rng, which: usize) -> f64 {
    let len = rng.gen_range(1..20);
    let inputs = vec![away_from_zero(rng, &[len])];
    gradcheck(&inputs, rng.gen(), |g, v| match which {
        0 => g.relu(v[0]),
        1 => g.sigmoid(v[0]),
        _ => g.swish(v[0]),
    })
}

fn softmax(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [
        rng.gen_range(1..4),
        rng.gen_range(2..5),
        rng.gen_range(1..4),
    ];
    let axis = rng.gen_range(0..3);
    let inputs = vec![random_tensor(rng, &shape, -3.0, 3.0)];
    gradcheck(&inputs, rng.gen(), |g, v| g.softmax(v[0], axis).unwrap())
}

fn pooling(rng: &mut ChaCha8Rng, which: usize) -> f64 {
    let shape = [
        rng.gen_range(1..3),
        rng.gen_range(1..3),
        rng.gen_range(2..6),
        rng.gen_range(2..6),
    ];
    let inputs = vec![random_tensor(rng, &shape, -2.0, 2.0)];
    gradcheck(&inputs, rng.gen(), |g, v| match which {
        0 => g.global_avg_pool(v[0]).unwrap(),
        1 => g.avg_pool(v[0], (2, 2), (1, 2)).unwrap(),
        _ => g.max_pool(v[0], (2, 2), (2, 1)).unwrap(),
    })
}

fn linear(rng: &mut ChaCha8Rng) -> f64 {
    let (n, d, e) = (
        rng.gen_range(1..4),
        rng.gen_range(1..6),
        rng.gen_range(1..6),
    );
    let bias = rng.gen_bool(0.5);
    let mut inputs = vec![
        random_tensor(rng, &[n, d], -1.0, 1.0),
        random_tensor(rng, &[d, e], -1.0, 1.0),
    ];
    if bias {
        inputs.push(random_tensor(rng, &[e], -1.0, 1.0));
    }
    gradcheck(&inputs, rng.gen(), |g, v| {
        g.linear(v[0], v[1], v.get(2).copied()).unwrap()
    })
}

fn elementwise(rng: &mut ChaCha8Rng, which: usize) -> f64 {
    let (n, c, hw) = (
        rng.gen_range(1..3),
        rng.gen_range(2..5),
        rng.gen_range(1..5),
    );
    let inputs = vec![
        random_tensor(rng, &[n, c, hw, 2], -1.0, 1.0),
        random_tensor(rng, &[n, c, hw, 2], -1.0, 1.0),
        random_tensor(rng, &[n, c], -1.0, 1.0),
    ];
    gradcheck(&inputs, rng.gen(), |g, v| match which {
        0 => g.add(v[0], v[1]).unwrap(),
        1 => g.mul(v[0], v[1]).unwrap(),
        2 => {
            let s = g.add_scalar(v[0], 1.0);
            g.mul_scalar(s, -2.5)
        }
        3 => g.scale_channels(v[0], v[2]).unwrap(),
        4 => {
            let a = g.slice_channels(v[0], 1, c - 1).unwrap();
            g.concat_channels(&[v[1], a]).unwrap()
        }
        _ => {
            let r = g.reshape(v[0], &[n, c * hw * 2]).unwrap();
            let m = g.mean(r);
            let s = g.sum(v[1]);
            g.add(m, s).unwrap()
        }
    })
}

fn mask(rng: &mut ChaCha8Rng) -> f64 {
    let shape = [
        rng.gen_range(1..3),
        1,
        rng.gen_range(1..5),
        rng.gen_range(1..5),
    ];
    let inputs = vec![
        random_tensor(rng, &shape, -1.0, 1.0),
        random_tensor(rng, &shape, 0.0, 1.0),
    ];
    gradcheck(&inputs, rng.gen(), |g, v| {
        apply_mask(g, v[0], v[1]).unwrap()
    })
}

fn metric(rng: &mut ChaCha8Rng) -> f64 {
    let (n, k, d) = (
        rng.gen_range(1..4),
        rng.gen_range(2..4),
        rng.gen_range(1..6),
    );
    let inputs = vec![
        random_tensor(rng, &[n, d], -1.0, 1.0),
        random_tensor(rng, &[k, d], -1.0, 1.0),
    ];
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    gradcheck(&inputs, rng.gen(), |g, v| {
        let dist = g.sqdist(v[0], v[1]).unwrap();
        let pos = g.gather(dist, &labels).unwrap();
        let neg = g.min_excluding(dist, &labels).unwrap();
        let m = g.mul(pos, neg).unwrap();
        g.add(m, pos).unwrap()
    })
}

fn probability_losses(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.gen_range(1..5);
    let gamma = [0.0, 0.005, 2.0][rng.gen_range(0..3)];
    let inputs = vec![random_tensor(rng, &[n, 2], -2.0, 2.0)];
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let alpha: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 0 { 0.3 } else { 1.7 })
        .collect();
    gradcheck(&inputs, rng.gen(), |g, v| {
        let p = g.softmax(v[0], 1).unwrap();
        let pt = g.gather(p, &labels).unwrap();
        let f = g.focal(pt, &alpha, gamma).unwrap();
        let w = g.weighted_nll(pt, &alpha).unwrap();
        g.add(f, w).unwrap()
    })
}
