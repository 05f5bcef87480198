use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::deltas::{deltas, DELTA_WINDOW};
use super::spectrogram::{power_frames, require_segment, LOG_FLOOR};
use super::{hamming, FeatureKind, FeatureMatrix, Waveform, FRAMES, SAMPLE_RATE};
use crate::error::Result;

pub const LFCC_FILTERS: usize = 20;
/// Static cepstra per frame, c0 included.
pub const LFCC_COEFFS: usize = 20;

const FRAME_LEN: usize = 320;
const FFT_LEN: usize = 512;

/// Triangular filters with centres linearly spaced over `0..=nyquist`.
fn linear_filterbank(n_filters: usize, fft_len: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let bins = fft_len / 2 + 1;
    let nyquist = sample_rate / 2.0;
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|m| m as f64 * nyquist / (n_filters + 1) as f64)
        .collect();
    (0..n_filters)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate / fft_len as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out x n_in`.
fn dct_basis(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|m| {
                    scale * (std::f64::consts::PI * i as f64 * (m as f64 + 0.5) / n_in as f64).cos()
                })
                .collect()
        })
        .collect()
}

/// Linear-frequency cepstral coefficients: 20 ms Hamming frames, 10 ms hop,
/// 512-point FFT, 20 linear triangular filters, log energies, DCT-II to 20
/// cepstra, then deltas and delta-deltas stacked below (60 x 400).
#[derive(Clone)]
pub struct LfccExtractor {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl Default for LfccExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl LfccExtractor {
    pub fn new() -> Self {
        LfccExtractor {
            window: hamming(FRAME_LEN),
            fft: FftPlanner::new().plan_fft_forward(FFT_LEN),
            filters: linear_filterbank(LFCC_FILTERS, FFT_LEN, SAMPLE_RATE as f64),
            dct: dct_basis(LFCC_COEFFS, LFCC_FILTERS),
        }
    }

    /// Static cepstra as a `LFCC_COEFFS x FRAMES` row-major matrix.
    pub fn static_cepstra(&self, w: &Waveform) -> Result<Vec<f64>> {
        require_segment(w)?;
        let spectra = power_frames(w, FRAME_LEN, &self.window, &self.fft);
        let mut cep = vec![0.0; LFCC_COEFFS * FRAMES];
        let mut log_e = vec![0.0; LFCC_FILTERS];
        for (t, spec) in spectra.iter().enumerate() {
            for (e, filt) in log_e.iter_mut().zip(&self.filters) {
                let energy: f64 = filt.iter().zip(spec).map(|(a, b)| a * b).sum();
                *e = (energy + LOG_FLOOR).ln();
            }
            for (i, basis) in self.dct.iter().enumerate() {
                cep[i * FRAMES + t] = basis.iter().zip(&log_e).map(|(a, b)| a * b).sum();
            }
        }
        Ok(cep)
    }

    pub fn extract(
        &self,
        w: &Waveform,
        source_id: &str,
        segment_index: usize,
    ) -> Result<FeatureMatrix> {
        let cep = self.static_cepstra(w)?;
        let d1 = deltas(&cep, LFCC_COEFFS, FRAMES, DELTA_WINDOW)?;
        let d2 = deltas(&d1, LFCC_COEFFS, FRAMES, DELTA_WINDOW)?;
        let values = cep
            .iter()
            .chain(&d1)
            .chain(&d2)
            .map(|&v| v as f32)
            .collect();
        FeatureMatrix::new(FeatureKind::Lfcc, values, source_id, segment_index)
    }
}

/// One-shot [`LfccExtractor::extract`].
pub fn lfcc(w: &Waveform) -> Result<FeatureMatrix> {
    LfccExtractor::new().extract(w, "", 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SEGMENT_SAMPLES;

    #[test]
    fn filters_are_unit_peaked_triangles() {
        let fb = linear_filterbank(LFCC_FILTERS, FFT_LEN, 16_000.0);
        assert_eq!(fb.len(), 20);
        for f in &fb {
            let max = f.iter().cloned().fold(0.0, f64::max);
            assert!(max > 0.9 && max <= 1.0);
        }
    }

    #[test]
    fn dct_basis_is_orthonormal() {
        let b = dct_basis(20, 20);
        for i in 0..20 {
            for j in 0..20 {
                let dot: f64 = b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_signal_has_flat_deltas() {
        let w = Waveform::new(vec![0.25; SEGMENT_SAMPLES], SAMPLE_RATE).unwrap();
        let f = lfcc(&w).unwrap();
        assert_eq!((f.rows(), f.cols()), (60, 400));
        // frames fully inside the signal (away from the zero padding)
        for row in 20..60 {
            for t in 6..394 {
                assert!(
                    f.get(row, t).abs() < 1e-3,
                    "row {row} frame {t}: {}",
                    f.get(row, t)
                );
            }
        }
    }
}
