//! Brute-force threshold sweeps the scoring code is checked against.

use eabn::data::Key;
use eabn::scoring::{compute_eer, error_rates, tdcf_curve, TdcfParams, Trial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn trials(bona: &[f64], spoof: &[f64]) -> Vec<Trial> {
    bona.iter()
        .map(|&s| Trial::new("b", "-", Key::Bonafide, s))
        .chain(spoof.iter().map(|&s| Trial::new("s", "A01", Key::Spoof, s)))
        .collect()
}

/// Operating points from counting at `-inf` and at every distinct score:
/// thresholding at a score gives the same rates as at the midpoint above it.
pub fn brute_force_points(t: &[Trial]) -> Vec<(f64, f64)> {
    let mut scores: Vec<f64> = t.iter().map(|t| t.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    std::iter::once(f64::NEG_INFINITY)
        .chain(scores)
        .map(|s| error_rates(t, s).unwrap())
        .collect()
}

pub fn brute_force_eer(points: &[(f64, f64)]) -> f64 {
    for &(m, f) in points {
        if m - f == 0.0 {
            return m;
        }
    }
    for w in points.windows(2) {
        let (d0, d1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if d0 < 0.0 && d1 > 0.0 {
            let t = d0 / (d0 - d1);
            return w[0].0 + t * (w[1].0 - w[0].0);
        }
    }
    unreachable!("rates cross")
}

pub fn score_set(seed: u64, n: usize, ties: bool) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bona = rng.gen_range(1..n);
    let shift = rng.gen_range(-1.0..3.0);
    let draw = |rng: &mut ChaCha8Rng, mu: f64| {
        let v: f64 = rng.gen_range(-2.0..2.0) + mu;
        if ties {
            (v * 4.0).round() / 4.0
        } else {
            v
        }
    };
    let bona: Vec<f64> = (0..n_bona).map(|_| draw(&mut rng, shift)).collect();
    let spoof: Vec<f64> = (0..n - n_bona).map(|_| draw(&mut rng, 0.0)).collect();
    trials(&bona, &spoof)
}

/// Compares EER and minimum t-DCF on one random score set against the brute
/// force; returns a description of the first disagreement.
pub fn sweep_mismatch(seed: u64, n: usize, ties: bool) -> Option<String> {
    let t = score_set(seed, n, ties);
    let points = brute_force_points(&t);
    let (eer, brute_eer) = (compute_eer(&t).unwrap().eer, brute_force_eer(&points));
    if eer != brute_eer {
        return Some(format!(
            "seed {seed} n {n}: EER {eer} vs brute force {brute_eer}"
        ));
    }
    let p = TdcfParams::default();
    let (c1, c2) = (p.c1(), p.c2());
    let brute_min = points
        .iter()
        .map(|&(m, f)| c1 * m + c2 * f)
        .fold(f64::INFINITY, f64::min);
    let curve = tdcf_curve(&t, &p).unwrap();
    if curve.min != brute_min {
        return Some(format!(
            "seed {seed} n {n}: min t-DCF {} vs brute force {brute_min}",
            curve.min
        ));
    }
    if !(0.0..=1.0).contains(&curve.normalized_min) {
        return Some(format!(
            "seed {seed} n {n}: normalized t-DCF {}",
            curve.normalized_min
        ));
    }
    None
}
