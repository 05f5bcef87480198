//! EER, DET points and minimum t-DCF for two overlapping Gaussian score
//! populations at increasing separation.

use eabn::data::Key;
use eabn::scoring::{evaluate, DetCurve, TdcfParams, Trial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn trials(rng: &mut ChaCha8Rng, separation: f64) -> Vec<Trial> {
    let bona = Normal::new(separation, 1.0).unwrap();
    let spoof = Normal::new(0.0, 1.0).unwrap();
    let mut t: Vec<Trial> = (0..500)
        .map(|i| Trial::new(format!("B{i}"), "-", Key::Bonafide, bona.sample(rng)))
        .collect();
    for (i, attack) in (0..4500).zip(["A01", "A02", "A03"].iter().cycle()) {
        t.push(Trial::new(
            format!("S{i}"),
            *attack,
            Key::Spoof,
            spoof.sample(rng),
        ));
    }
    t
}

fn main() -> eabn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = TdcfParams::default();
    for separation in [0.5, 2.0, 4.0] {
        let t = trials(&mut rng, separation);
        println!("separation {separation}");
        print!("{}", evaluate(&t, &params)?);
        let det = DetCurve::new(&t)?;
        let step = det.thresholds.len() / 4;
        for i in (0..det.thresholds.len()).step_by(step.max(1)) {
            println!(
                "  threshold {:+.3}: p_miss {:.4} p_fa {:.4}",
                det.thresholds[i], det.p_miss[i], det.p_fa[i]
            );
        }
    }
    Ok(())
}
