use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

/// Inclusive `(min, max)` band widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Bands {
    pub min: usize,
    pub max: usize,
}

/// Time/frequency zero-masking policy.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentPolicy {
    pub apply_probability: f64,
    pub time_bands: Bands,
    pub freq_bands: Bands,
    pub rng_seed: u64,
}

impl AugmentPolicy {
    /// Training defaults for a feature kind: p = 0.25, 20..=80 frames and
    /// the kind's frequency band range.
    pub fn standard(kind: FeatureKind, rng_seed: u64) -> Self {
        let (min, max) = kind.freq_band();
        AugmentPolicy {
            apply_probability: 0.25,
            time_bands: Bands { min: 20, max: 80 },
            freq_bands: Bands { min, max },
            rng_seed,
        }
    }

    pub fn disabled() -> Self {
        AugmentPolicy {
            apply_probability: 0.0,
            ..Self::standard(FeatureKind::Lfcc, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::invalid(format!(
                "augment probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        for (name, b) in [("time", self.time_bands), ("frequency", self.freq_bands)] {
            if b.min == 0 || b.min > b.max {
                return Err(Error::invalid(format!(
                    "{name} band range {}..={} is empty",
                    b.min, b.max
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic per-sample seed from `(seed, utterance id, segment index)`.
pub fn sample_seed(seed: u64, source_id: &str, segment_index: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((source_id.len() as u64).to_le_bytes());
    h.update(source_id.as_bytes());
    h.update((segment_index as u64).to_le_bytes());
    h.finalize().into()
}

/// A zeroed band: `start..start + width` on one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskedBands {
    pub time: (usize, usize),
    pub freq: (usize, usize),
}

fn draw_band(rng: &mut ChaCha8Rng, bands: Bands, extent: usize) -> (usize, usize) {
    let width = rng.gen_range(bands.min..=bands.max).min(extent);
    let start = rng.gen_range(0..=extent - width);
    (start, width)
}

/// Applies the policy in place; returns the bands zeroed, if any.
pub fn spec_augment_in_place(
    f: &mut FeatureMatrix,
    p: &AugmentPolicy,
) -> Result<Option<MaskedBands>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::from_seed(sample_seed(p.rng_seed, &f.source_id, f.segment_index));
    if !rng.gen_bool(p.apply_probability) {
        return Ok(None);
    }
    let (rows, cols) = (f.rows(), f.cols());
    let time = draw_band(&mut rng, p.time_bands, cols);
    let freq = draw_band(&mut rng, p.freq_bands, rows);
    let values = f.values_mut();
    for r in 0..rows {
        let row = &mut values[r * cols..(r + 1) * cols];
        if (freq.0..freq.0 + freq.1).contains(&r) {
            row.fill(0.0);
        } else {
            row[time.0..time.0 + time.1].fill(0.0);
        }
    }
    Ok(Some(MaskedBands { time, freq }))
}

/// SpecAugment: with the policy's probability, zero one time band and one
/// frequency band. The draw depends only on the policy seed and the
/// matrix's source id and segment index.
pub fn spec_augment(f: &FeatureMatrix, p: &AugmentPolicy) -> Result<FeatureMatrix> {
    let mut out = f.clone();
    spec_augment_in_place(&mut out, p)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(kind: FeatureKind, id: &str, seg: usize) -> FeatureMatrix {
        let (r, c) = kind.dims();
        FeatureMatrix::new(kind, vec![1.0; r * c], id, seg).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let f = ones(FeatureKind::Lfcc, "u1", 0);
        let out = spec_augment(&f, &AugmentPolicy::disabled()).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn certain_policy_zeroes_exactly_two_bands() {
        for kind in [FeatureKind::Lfcc, FeatureKind::LogPowSpec] {
            let mut f = ones(kind, "utt", 3);
            let p = AugmentPolicy {
                apply_probability: 1.0,
                ..AugmentPolicy::standard(kind, 7)
            };
            let bands = spec_augment_in_place(&mut f, &p).unwrap().unwrap();
            for r in 0..f.rows() {
                for c in 0..f.cols() {
                    let masked = (bands.freq.0..bands.freq.0 + bands.freq.1).contains(&r)
                        || (bands.time.0..bands.time.0 + bands.time.1).contains(&c);
                    assert_eq!(f.get(r, c) == 0.0, masked);
                }
            }
        }
    }

    #[test]
    fn oversize_bands_are_clamped() {
        let mut f = ones(FeatureKind::Lfcc, "u", 0);
        let p = AugmentPolicy {
            apply_probability: 1.0,
            time_bands: Bands { min: 500, max: 900 },
            freq_bands: Bands { min: 70, max: 80 },
            rng_seed: 1,
        };
        let bands = spec_augment_in_place(&mut f, &p).unwrap().unwrap();
        assert_eq!(bands.time, (0, 400));
        assert_eq!(bands.freq, (0, 60));
    }

    #[test]
    fn seed_depends_on_every_component() {
        let base = sample_seed(1, "a", 0);
        assert_ne!(base, sample_seed(2, "a", 0));
        assert_ne!(base, sample_seed(1, "b", 0));
        assert_ne!(base, sample_seed(1, "a", 1));
        assert_eq!(base, sample_seed(1, "a", 0));
    }

    #[test]
    fn invalid_policies_rejected() {
        let mut p = AugmentPolicy::standard(FeatureKind::Lfcc, 0);
        p.apply_probability = 1.5;
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::standard(FeatureKind::Lfcc, 0);
        p.time_bands = Bands { min: 10, max: 5 };
        assert!(p.validate().is_err());
    }
}
