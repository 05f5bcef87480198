//! Attention masks of one bona fide and one replayed toy utterance, written
//! as PNG and CSV. Uses a trained checkpoint when given, otherwise a freshly
//! initialised A0 network on LFCC.
//!
//!     cargo run --release --example attention_masks -- [run/best.ckpt]

use eabn::data::{export_masks, gen_toy_dataset, Key, MaskExport, MaskMode, ToySpec};
use eabn::features::{Extractor, FeatureKind};
use eabn::model::BackboneConfig;
use eabn::train::Network;

fn main() -> eabn::Result<()> {
    let (mut net, kind) = match std::env::args().nth(1) {
        Some(path) => {
            let (net, spec) = Network::load(path.as_ref())?;
            (net, spec.feature)
        }
        None => {
            let kind = FeatureKind::Lfcc;
            (
                Network::new(&BackboneConfig::efficientnet_a0(), kind.dims(), 0)?,
                kind,
            )
        }
    };
    let toy = gen_toy_dataset(ToySpec {
        n_bonafide: 5,
        n_spoof: 5,
        ..ToySpec::default()
    })?;
    let extractor = Extractor::new(kind);
    let (rows, cols) = kind.dims();
    let mut masks = Vec::new();
    for key in [Key::Bonafide, Key::Spoof] {
        let entry = toy
            .entries
            .iter()
            .find(|e| e.key == key)
            .expect("both classes present");
        let segments = extractor.utterance(&toy.synthesize(entry)?, &entry.utt_id)?;
        let out = net.infer(&segments.iter().collect::<Vec<_>>(), true)?;
        let mask = out[0].mask.clone().expect("masks requested");
        let mean = mask.iter().map(|&v| v as f64).sum::<f64>() / mask.len() as f64;
        println!(
            "{} ({}): score {:+.3}, mean mask {mean:.3}",
            entry.utt_id, key, out[0].score
        );
        masks.push(MaskExport {
            utt_id: entry.utt_id.clone(),
            attack_id: entry.attack_label().to_string(),
            rows,
            cols,
            values: mask,
        });
    }
    let dir = std::env::temp_dir().join("eabn-masks");
    for path in export_masks(&masks, MaskMode::Single, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
