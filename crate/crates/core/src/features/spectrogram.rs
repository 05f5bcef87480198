use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::segment::SEGMENT_SAMPLES;
use super::{centred_padding, hamming, FeatureKind, FeatureMatrix, Waveform, FRAMES, HOP};
use crate::error::{Error, Result};

/// Floor added to power before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

const FRAME_LEN: usize = 400;
const FFT_LEN: usize = 1024;

pub(crate) fn require_segment(w: &Waveform) -> Result<()> {
    if w.len() != SEGMENT_SAMPLES {
        return Err(Error::invalid(format!(
            "feature extraction needs exactly {SEGMENT_SAMPLES} samples (4 s), got {}",
            w.len()
        )));
    }
    Ok(())
}

/// Power spectra of every frame: `FRAMES` rows of `fft_len / 2 + 1` bins.
pub(crate) fn power_frames(
    w: &Waveform,
    frame_len: usize,
    window: &[f64],
    fft: &Arc<dyn Fft<f64>>,
) -> Vec<Vec<f64>> {
    let fft_len = fft.len();
    let padded = centred_padding(w.samples(), frame_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    (0..FRAMES)
        .map(|t| {
            let frame = &padded[t * HOP..t * HOP + frame_len];
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, (&s, &win)) in frame.iter().zip(window).enumerate() {
                buf[i].re = s * win;
            }
            fft.process(&mut buf);
            buf[..fft_len / 2 + 1]
                .iter()
                .map(|c| c.norm_sqr())
                .collect()
        })
        .collect()
}

/// Log power spectrogram: 25 ms Hamming frames, 10 ms hop, zero-padded to a
/// 1024-point FFT, giving 513 x 400 for a 4 s segment.
#[derive(Clone)]
pub struct LogPowSpecExtractor {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Default for LogPowSpecExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl LogPowSpecExtractor {
    pub fn new() -> Self {
        LogPowSpecExtractor {
            window: hamming(FRAME_LEN),
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
        }
    }

    pub fn extract(
        &self,
        w: &Waveform,
        source_id: &str,
        segment_index: usize,
    ) -> Result<FeatureMatrix> {
        require_segment(w)?;
        let spectra = power_frames(w, FRAME_LEN, &self.window, &self.fft);
        let bins = FFT_LEN / 2 + 1;
        let mut values = vec![0.0f32; bins * FRAMES];
        for (t, spec) in spectra.iter().enumerate() {
            for (k, &p) in spec.iter().enumerate() {
                values[k * FRAMES + t] = (p + LOG_FLOOR).ln() as f32;
            }
        }
        FeatureMatrix::new(FeatureKind::LogPowSpec, values, source_id, segment_index)
    }
}

/// One-shot [`LogPowSpecExtractor::extract`].
pub fn log_pow_spec(w: &Waveform) -> Result<FeatureMatrix> {
    LogPowSpecExtractor::new().extract(w, "", 0)
}
