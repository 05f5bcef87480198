//! Log power spectrogram and LFCC of a WAV file, or of a synthetic chirp
//! when no path is given.
//!
//!     cargo run --example features -- [path/to/16k_mono.wav]

use eabn::data::read_wav;
use eabn::features::{Extractor, FeatureKind, FeatureMatrix, Waveform, SAMPLE_RATE};

fn chirp(secs: f64) -> Waveform {
    let n = (secs * SAMPLE_RATE as f64) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            // 100 Hz sweeping up to 7 kHz
            let phase = std::f64::consts::TAU * (100.0 * t + 0.5 * (6900.0 / secs) * t * t);
            (0.3 * phase.sin()) as f32
        })
        .collect();
    Waveform::new(samples, SAMPLE_RATE).unwrap()
}

fn summary(f: &FeatureMatrix) {
    let v = f.values();
    let (lo, hi) = v
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
    println!(
        "  segment {}: {}x{} min {lo:.2} max {hi:.2} mean {mean:.2}",
        f.segment_index,
        f.rows(),
        f.cols()
    );
}

fn main() -> eabn::Result<()> {
    let (w, id) = match std::env::args().nth(1) {
        Some(path) => (read_wav(path.as_ref())?, path),
        None => (chirp(6.0), "chirp".to_string()),
    };
    println!("{id}: {:.2} s at {} Hz", w.duration_secs(), w.sample_rate());
    for kind in [FeatureKind::LogPowSpec, FeatureKind::Lfcc] {
        println!("{}", kind.name());
        for f in Extractor::new(kind).utterance(&w, &id)? {
            summary(&f);
        }
    }
    Ok(())
}
