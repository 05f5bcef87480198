//! Deterministic synthetic corpus: harmonic "bona fide" tones and the same
//! construction passed through a simulated replay channel.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{serialize_protocol, write_wav, Key, Partition, ProtocolEntry};
use crate::error::{Error, Result};
use crate::features::{sample_seed, Waveform, SAMPLE_RATE};

/// File name of the protocol written next to the audio.
pub const PROTOCOL_FILE: &str = "protocol.txt";
/// Sub-directory holding `<utt_id>.wav`.
pub const AUDIO_DIR: &str = "wav";
pub const TOY_ATTACK: &str = "R01";

const BONAFIDE_NOISE_STD: f64 = 0.002;
const SIGNAL_RMS: f64 = 0.1;
const PEAK_LIMIT: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelParams {
    /// Low-pass cutoff of the order-4 Butterworth band limit.
    pub cutoff_hz: f64,
    pub echo_delay_secs: f64,
    pub echo_decay: f64,
    /// Signal-to-noise ratio of the added white noise.
    pub snr_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            cutoff_hz: 4000.0,
            echo_delay_secs: 0.040,
            echo_decay: 0.4,
            snr_db: 25.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToySpec {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub duration_secs: f64,
    pub seed: u64,
    pub channel: ChannelParams,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_bonafide: 200,
            n_spoof: 1800,
            duration_secs: 4.0,
            seed: 0,
            channel: ChannelParams::default(),
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_bonafide == 0 || self.n_spoof == 0 {
            return Err(Error::Config(
                "toy corpus needs at least one utterance per class".into(),
            ));
        }
        if !(self.duration_secs > 0.0) || (self.duration_secs * SAMPLE_RATE as f64) < 1.0 {
            return Err(Error::Config(format!(
                "duration {} s is too short",
                self.duration_secs
            )));
        }
        let c = &self.channel;
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(c.cutoff_hz > 0.0 && c.cutoff_hz < nyquist) {
            return Err(Error::Config(format!(
                "cutoff {} Hz outside (0, {nyquist})",
                c.cutoff_hz
            )));
        }
        if !(c.echo_delay_secs >= 0.0)
            || !(0.0..1.0).contains(&c.echo_decay)
            || !c.snr_db.is_finite()
        {
            return Err(Error::Config("invalid replay channel parameters".into()));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.duration_secs * SAMPLE_RATE as f64).round() as usize
    }
}

/// `(train, dev, eval)` sizes of a 60/20/20 split.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.6).round() as usize;
    let dev = ((n as f64 * 0.2).round() as usize).min(n - train);
    (train, dev, n - train - dev)
}

/// Protocol of a toy corpus; audio is synthesised on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub spec: ToySpec,
    pub entries: Vec<ProtocolEntry>,
}

pub fn gen_toy_dataset(spec: ToySpec) -> Result<ToyDataset> {
    spec.validate()?;
    let (bt, bd, _) = split_counts(spec.n_bonafide);
    let (st, sd, _) = split_counts(spec.n_spoof);
    let part = |i: usize, train: usize, dev: usize| {
        if i < train {
            Partition::Train
        } else if i < train + dev {
            Partition::Dev
        } else {
            Partition::Eval
        }
    };
    let mut entries = Vec::with_capacity(spec.n_bonafide + spec.n_spoof);
    for p in Partition::ALL {
        let bona = (0..spec.n_bonafide)
            .filter(|&i| part(i, bt, bd) == p)
            .map(|i| (Key::Bonafide, i));
        let spoof = (0..spec.n_spoof)
            .filter(|&i| part(i, st, sd) == p)
            .map(|i| (Key::Spoof, i));
        for (n, (key, i)) in bona.chain(spoof).enumerate() {
            entries.push(ProtocolEntry {
                speaker_id: format!("TOY_{:04}", i % 20),
                utt_id: format!("TOY_{}_{:07}", p.letter(), n),
                environment: None,
                attack_id: (key == Key::Spoof).then(|| TOY_ATTACK.to_string()),
                key,
                partition: p,
            });
        }
    }
    Ok(ToyDataset { spec, entries })
}

impl ToyDataset {
    /// Waveform of one entry; a pure function of the `ToySpec` and the id.
    pub fn synthesize(&self, entry: &ProtocolEntry) -> Result<Waveform> {
        let mut rng = ChaCha8Rng::from_seed(sample_seed(self.spec.seed, &entry.utt_id, 0));
        let n = self.spec.samples();
        let mut x = harmonic_source(&mut rng, n);
        if entry.key == Key::Spoof {
            x = replay_channel(&mut rng, &x, &self.spec.channel);
        }
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > PEAK_LIMIT {
            x.iter_mut().for_each(|v| *v *= PEAK_LIMIT / peak);
        }
        Waveform::new(x.into_iter().map(|v| v as f32).collect(), SAMPLE_RATE)
    }

    /// Writes `protocol.txt` and `wav/<utt_id>.wav` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let audio = dir.join(AUDIO_DIR);
        std::fs::create_dir_all(&audio).map_err(|e| Error::file(&audio, e))?;
        for e in &self.entries {
            write_wav(
                &audio.join(format!("{}.wav", e.utt_id)),
                &self.synthesize(e)?,
            )?;
        }
        crate::features::file::write_atomic(
            &dir.join(PROTOCOL_FILE),
            serialize_protocol(&self.entries).as_bytes(),
        )
    }
}

/// 3 to 5 random harmonics of a random fundamental, a slow amplitude
/// envelope and faint white noise, scaled to a fixed RMS.
fn harmonic_source(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let f0 = rng.gen_range(100.0..250.0);
    let max_harmonic = (7600.0 / f0) as usize;
    let count = rng.gen_range(3..=5);
    let mut harmonics: Vec<usize> = Vec::with_capacity(count);
    while harmonics.len() < count {
        let h = rng.gen_range(1..=max_harmonic);
        if !harmonics.contains(&h) {
            harmonics.push(h);
        }
    }
    let partials: Vec<(f64, f64, f64)> = harmonics
        .iter()
        .map(|&h| {
            (
                2.0 * PI * f0 * h as f64 / fs,
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let am_rate = 2.0 * PI * rng.gen_range(1.0..4.0) / fs;
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    // each oscillator advances by a fixed rotation instead of calling sin per sample
    let mut oscillators: Vec<Phasor> = partials
        .iter()
        .map(|&(w, a, ph)| Phasor::new(w, ph, a))
        .collect();
    let mut envelope = Phasor::new(am_rate, am_phase, 0.4);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let env = 0.6 + envelope.next();
        x.push(env * oscillators.iter_mut().map(Phasor::next).sum::<f64>());
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let gain = if rms > 0.0 { SIGNAL_RMS / rms } else { 1.0 };
    let noise = Normal::new(0.0, BONAFIDE_NOISE_STD).expect("valid std");
    for v in x.iter_mut() {
        *v = *v * gain + noise.sample(rng);
    }
    x
}

/// `amp * sin(w t + phase)` by complex rotation.
struct Phasor {
    re: f64,
    im: f64,
    cos: f64,
    sin: f64,
}

impl Phasor {
    fn new(w: f64, phase: f64, amp: f64) -> Self {
        Phasor {
            re: amp * phase.cos(),
            im: amp * phase.sin(),
            cos: w.cos(),
            sin: w.sin(),
        }
    }

    fn next(&mut self) -> f64 {
        let out = self.im;
        let re = self.re * self.cos - self.im * self.sin;
        self.im = self.re * self.sin + self.im * self.cos;
        self.re = re;
        out
    }
}

/// Band limit, single echo, additive noise at the requested SNR.
fn replay_channel(rng: &mut ChaCha8Rng, x: &[f64], c: &ChannelParams) -> Vec<f64> {
    let mut y = butterworth_lowpass4(x, c.cutoff_hz, SAMPLE_RATE as f64);
    let delay = (c.echo_delay_secs * SAMPLE_RATE as f64).round() as usize;
    for t in (delay..y.len()).rev() {
        y[t] += c.echo_decay * y[t - delay];
    }
    let power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let std = (power / 10f64.powf(c.snr_db / 10.0)).sqrt();
    if std > 0.0 {
        let noise = Normal::new(0.0, std).expect("valid std");
        y.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    y
}

/// Order-4 Butterworth low-pass as two cascaded biquads.
pub fn butterworth_lowpass4(x: &[f64], cutoff_hz: f64, fs: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * cutoff_hz / fs;
    let (sin, cos) = w0.sin_cos();
    let mut y = x.to_vec();
    for k in [1.0, 3.0] {
        let q = 1.0 / (2.0 * (k * PI / 8.0).cos());
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b0 = (1.0 - cos) / 2.0 / a0;
        let b1 = (1.0 - cos) / a0;
        let a1 = -2.0 * cos / a0;
        let a2 = (1.0 - alpha) / a0;
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in y.iter_mut() {
            let out = b0 * *v + b1 * x1 + b0 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = out;
            *v = out;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ToySpec {
        ToySpec {
            n_bonafide: 6,
            n_spoof: 9,
            duration_secs: 0.5,
            seed,
            ..ToySpec::default()
        }
    }

    #[test]
    fn counts_and_split() {
        let d = gen_toy_dataset(ToySpec::default()).unwrap();
        let count = |k: Key, p: Partition| {
            d.entries
                .iter()
                .filter(|e| e.key == k && e.partition == p)
                .count()
        };
        assert_eq!(d.entries.len(), 2000);
        assert_eq!(
            [Partition::Train, Partition::Dev, Partition::Eval].map(|p| count(Key::Bonafide, p)),
            [120, 40, 40]
        );
        assert_eq!(
            [Partition::Train, Partition::Dev, Partition::Eval].map(|p| count(Key::Spoof, p)),
            [1080, 360, 360]
        );
        assert_eq!(split_counts(1), (1, 0, 0));
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = gen_toy_dataset(small(3)).unwrap();
        let b = gen_toy_dataset(small(3)).unwrap();
        let c = gen_toy_dataset(small(4)).unwrap();
        let e = &a.entries[0];
        assert_eq!(a.synthesize(e).unwrap(), b.synthesize(e).unwrap());
        assert_ne!(a.synthesize(e).unwrap(), c.synthesize(e).unwrap());
    }

    #[test]
    fn lowpass_passes_dc_and_blocks_nyquist() {
        let dc = butterworth_lowpass4(&vec![1.0; 2000], 4000.0, 16000.0);
        assert!((dc[1999] - 1.0).abs() < 1e-9);
        let alt: Vec<f64> = (0..2000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let ny = butterworth_lowpass4(&alt, 4000.0, 16000.0);
        assert!(ny[1000..].iter().all(|v| v.abs() < 1e-6));
        // -3 dB at the cutoff
        let tone: Vec<f64> = (0..8000).map(|i| (PI / 2.0 * i as f64).sin()).collect();
        let out = butterworth_lowpass4(&tone, 4000.0, 16000.0);
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        assert!((rms(&out[4000..]) / rms(&tone[4000..]) - 0.5f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn phasor_tracks_sine() {
        let mut p = Phasor::new(0.3, 0.7, 0.5);
        for t in 0..64000 {
            let want = 0.5 * (0.3 * t as f64 + 0.7).sin();
            assert!((p.next() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(gen_toy_dataset(ToySpec {
            n_spoof: 0,
            ..small(0)
        })
        .is_err());
        assert!(gen_toy_dataset(ToySpec {
            duration_secs: 0.0,
            ..small(0)
        })
        .is_err());
        let mut s = small(0);
        s.channel.cutoff_hz = 9000.0;
        assert!(gen_toy_dataset(s).is_err());
    }
}
