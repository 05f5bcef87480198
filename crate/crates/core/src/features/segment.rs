use super::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Samples in one 4 s segment.
pub const SEGMENT_SAMPLES: usize = 4 * SAMPLE_RATE as usize;

fn tile(piece: &[f32]) -> Vec<f32> {
    piece
        .iter()
        .copied()
        .cycle()
        .take(SEGMENT_SAMPLES)
        .collect()
}

/// Splits a waveform into exactly-4 s segments.
///
/// Inputs shorter than 4 s are repeated end to end and truncated. Longer
/// inputs are cut into non-overlapping 4 s pieces; a trailing remainder is
/// tiled up to 4 s like a short input.
pub fn segment_4s(w: &Waveform) -> Result<Vec<Waveform>> {
    if w.is_empty() {
        return Err(Error::invalid("cannot segment an empty waveform"));
    }
    w.samples()
        .chunks(SEGMENT_SAMPLES)
        .map(|chunk| Waveform::new(tile(chunk), w.sample_rate()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize) -> Waveform {
        Waveform::new(
            (0..len).map(|i| (i % 1000) as f32 / 1000.0).collect(),
            SAMPLE_RATE,
        )
        .unwrap()
    }

    #[test]
    fn exact_four_seconds_is_unchanged() {
        let w = ramp(SEGMENT_SAMPLES);
        let segs = segment_4s(&w).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0], w);
    }

    #[test]
    fn two_seconds_is_doubled() {
        let w = ramp(SEGMENT_SAMPLES / 2);
        let segs = segment_4s(&w).unwrap();
        assert_eq!(segs.len(), 1);
        let expected: Vec<f32> = w.samples().iter().chain(w.samples()).copied().collect();
        assert_eq!(segs[0].samples(), &expected[..]);
    }

    #[test]
    fn ten_seconds_gives_three_segments() {
        let w = ramp(10 * SAMPLE_RATE as usize);
        let segs = segment_4s(&w).unwrap();
        assert_eq!(segs.len(), 3);
        let s = w.samples();
        assert_eq!(segs[0].samples(), &s[..SEGMENT_SAMPLES]);
        assert_eq!(segs[1].samples(), &s[SEGMENT_SAMPLES..2 * SEGMENT_SAMPLES]);
        // scripted reference: remainder [8 s, 10 s) repeated, cut at 4 s
        let rem = &s[2 * SEGMENT_SAMPLES..];
        let mut reference = Vec::new();
        while reference.len() < SEGMENT_SAMPLES {
            reference.extend_from_slice(rem);
        }
        reference.truncate(SEGMENT_SAMPLES);
        assert_eq!(segs[2].samples(), &reference[..]);
    }
}
