//! The whole workflow through the library API on a small toy corpus:
//! synthesise, extract LFCC, train A0, score the eval partition, report.
//!
//!     cargo run --release --example toy_pipeline -- [output dir]

use std::path::PathBuf;

use eabn::cli::extract_all;
use eabn::data::toy::{AUDIO_DIR, PROTOCOL_FILE};
use eabn::data::{gen_toy_dataset, Partition, ToySpec};
use eabn::features::FeatureKind;
use eabn::scoring::{evaluate, TdcfParams};
use eabn::train::{load_partition, score_utterances, train, Network, TrainConfig};

fn main() -> eabn::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("eabn-toy"));
    let data = dir.join("data");
    let feats = dir.join("feats");

    let toy = gen_toy_dataset(ToySpec {
        n_bonafide: 40,
        n_spoof: 360,
        ..ToySpec::default()
    })?;
    toy.write(&data)?;
    let segments = extract_all(
        &toy.entries,
        &data.join(AUDIO_DIR),
        &feats,
        FeatureKind::Lfcc,
        None,
        1,
    )?;
    println!(
        "{} utterances, {segments} feature files in {}",
        toy.entries.len(),
        feats.display()
    );

    let cfg = TrainConfig::parse(&format!(
        "[data]\nprotocol = {:?}\nfeatures = {:?}\nfeature = \"lfcc\"\n\n\
         [schedule]\nepochs = 3\nbatch_size = 16\nwarmup_steps = 20\n\n\
         [optimizer]\npeak_lr = 2e-3\n\n\
         [output]\ndir = {:?}\n",
        data.join(PROTOCOL_FILE),
        feats,
        dir.join("run")
    ))?;
    let run = train(&cfg, true)?;
    println!(
        "best epoch {} of {}",
        run.outcome.best_epoch,
        run.outcome.epochs.len()
    );

    let (mut net, spec) = Network::load(&run.checkpoint)?;
    let eval = load_partition(&toy.entries, Partition::Eval, &feats, spec.feature)?;
    let trials = score_utterances(&mut net, &eval)?;
    print!("{}", evaluate(&trials, &TdcfParams::default())?);
    Ok(())
}
