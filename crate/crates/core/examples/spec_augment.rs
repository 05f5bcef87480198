//! SpecAugment draws for a few segments: which time and frequency bands a
//! seeded policy zeroes, and that the draw repeats for the same segment.

use eabn::features::{spec_augment_in_place, AugmentPolicy, FeatureKind, FeatureMatrix};

fn main() -> eabn::Result<()> {
    for kind in [FeatureKind::Lfcc, FeatureKind::LogPowSpec] {
        let (rows, cols) = kind.dims();
        let policy = AugmentPolicy::standard(kind, 42);
        println!(
            "{}: p = {}, time {}..={} frames, frequency {}..={} bins",
            kind.name(),
            policy.apply_probability,
            policy.time_bands.min,
            policy.time_bands.max,
            policy.freq_bands.min,
            policy.freq_bands.max
        );
        for i in 0..8 {
            let mut f = FeatureMatrix::new(kind, vec![1.0; rows * cols], format!("utt{i}"), 0)?;
            let mut again = f.clone();
            let bands = spec_augment_in_place(&mut f, &policy)?;
            spec_augment_in_place(&mut again, &policy)?;
            assert_eq!(f, again);
            match bands {
                Some(b) => println!(
                    "  utt{i}: frames {}..{}, bins {}..{}",
                    b.time.0,
                    b.time.0 + b.time.1,
                    b.freq.0,
                    b.freq.0 + b.freq.1
                ),
                None => println!("  utt{i}: unchanged"),
            }
        }
    }
    Ok(())
}
