//! Acoustic front end: 4 s segmentation, log power spectrogram, LFCC with
//! deltas, SpecAugment masking and the binary feature file format.

mod augment;
mod deltas;
pub mod file;
mod lfcc;
mod segment;
mod spectrogram;

use crate::error::{Error, Result};

pub use augment::{
    sample_seed, spec_augment, spec_augment_in_place, AugmentPolicy, Bands, MaskedBands,
};
pub use deltas::{deltas, DELTA_WINDOW};
pub use lfcc::{lfcc, LfccExtractor, LFCC_COEFFS, LFCC_FILTERS};
pub use segment::{segment_4s, SEGMENT_SAMPLES};
pub use spectrogram::{log_pow_spec, LogPowSpecExtractor, LOG_FLOOR};

/// Front end for either feature kind.
#[derive(Clone)]
pub enum Extractor {
    LogPowSpec(LogPowSpecExtractor),
    Lfcc(LfccExtractor),
}

impl Extractor {
    pub fn new(kind: FeatureKind) -> Self {
        match kind {
            FeatureKind::LogPowSpec => Extractor::LogPowSpec(LogPowSpecExtractor::new()),
            FeatureKind::Lfcc => Extractor::Lfcc(LfccExtractor::new()),
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Extractor::LogPowSpec(_) => FeatureKind::LogPowSpec,
            Extractor::Lfcc(_) => FeatureKind::Lfcc,
        }
    }

    /// Features of one 4 s segment.
    pub fn extract(
        &self,
        w: &Waveform,
        source_id: &str,
        segment_index: usize,
    ) -> Result<FeatureMatrix> {
        match self {
            Extractor::LogPowSpec(e) => e.extract(w, source_id, segment_index),
            Extractor::Lfcc(e) => e.extract(w, source_id, segment_index),
        }
    }

    /// Splits an utterance into 4 s segments and extracts each.
    pub fn utterance(&self, w: &Waveform, source_id: &str) -> Result<Vec<FeatureMatrix>> {
        segment_4s(w)?
            .iter()
            .enumerate()
            .map(|(i, seg)| self.extract(seg, source_id, i))
            .collect()
    }
}

/// Sample rate every pipeline entry point requires.
pub const SAMPLE_RATE: u32 = 16_000;

/// Frames per 4 s segment for both feature kinds.
pub const FRAMES: usize = 400;

/// Frame hop: 10 ms.
pub const HOP: usize = 160;

/// Mono audio at [`SAMPLE_RATE`].
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(format!(
                "sample rate {sample_rate} Hz not supported (expected {SAMPLE_RATE})"
            )));
        }
        if samples.is_empty() {
            return Err(Error::invalid("empty waveform"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[serde(alias = "logpowspec")]
    LogPowSpec,
    Lfcc,
}

impl FeatureKind {
    /// `(rows, cols)` = `(frequency bins, frames)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            FeatureKind::LogPowSpec => (513, FRAMES),
            FeatureKind::Lfcc => (3 * LFCC_COEFFS, FRAMES),
        }
    }

    /// Inclusive SpecAugment frequency band range in bins.
    pub fn freq_band(self) -> (usize, usize) {
        match self {
            FeatureKind::LogPowSpec => (25, 100),
            FeatureKind::Lfcc => (5, 20),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            FeatureKind::LogPowSpec => 0,
            FeatureKind::Lfcc => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureKind::LogPowSpec),
            1 => Ok(FeatureKind::Lfcc),
            t => Err(Error::format(format!("unknown feature kind tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::LogPowSpec => "logpowspec",
            FeatureKind::Lfcc => "lfcc",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logpowspec" => Ok(FeatureKind::LogPowSpec),
            "lfcc" => Ok(FeatureKind::Lfcc),
            other => Err(Error::invalid(format!(
                "unknown feature kind {other:?} (expected logpowspec or lfcc)"
            ))),
        }
    }
}

/// A `(frequency x time)` feature map for one 4 s segment.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    values: Vec<f32>,
    pub source_id: String,
    pub segment_index: usize,
}

impl FeatureMatrix {
    pub fn new(
        kind: FeatureKind,
        values: Vec<f32>,
        source_id: impl Into<String>,
        segment_index: usize,
    ) -> Result<Self> {
        let (rows, cols) = kind.dims();
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} features must be {rows}x{cols}, got {} values",
                kind.name(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite {} feature value",
                kind.name()
            )));
        }
        Ok(FeatureMatrix {
            kind,
            values,
            source_id: source_id.into(),
            segment_index,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.kind.dims().0
    }

    pub fn cols(&self) -> usize {
        self.kind.dims().1
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols() + col]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }
}

/// Zero-pads a segment symmetrically so that framing with `frame_len` and
/// [`HOP`] yields exactly [`FRAMES`] frames.
pub(crate) fn centred_padding(samples: &[f32], frame_len: usize) -> Vec<f64> {
    let needed = (FRAMES - 1) * HOP + frame_len;
    let total = needed.saturating_sub(samples.len());
    let left = total / 2;
    let mut out = vec![0.0; left];
    out.extend(samples.iter().map(|&s| s as f64));
    out.resize(needed.max(out.len()), 0.0);
    out
}

/// Symmetric Hamming window.
pub(crate) fn hamming(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}
