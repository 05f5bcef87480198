//! Command-line front end. Every command writes its artifacts atomically
//! and maps failures to exit codes: 2 usage, 3 data, 4 numerical.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::data::{
    export_masks, read_protocol, read_wav, toy, ChannelParams, Key, MaskExport, MaskMode,
    Partition, ProtocolEntry, ToySpec,
};
use crate::error::{Error, Result};
use crate::features::{
    file, spec_augment_in_place, AugmentPolicy, Extractor, FeatureKind, FeatureMatrix,
};
use crate::model::{Backbone, EabnModel};
use crate::scoring::{asv_rates_from_scores, evaluate, scorefile, DetCurve, TdcfParams};
use crate::tensor::ParamStore;
use crate::train::{
    load_partition, score_utterances, train, Network, TrainConfig, DEFAULT_SEED, EVAL_BATCH,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "eabn",
    version,
    about = "Spoofing countermeasure toolkit: features, training, scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Train,
    Dev,
    Eval,
    All,
}

impl PartitionArg {
    fn admits(self, p: Partition) -> bool {
        match self {
            PartitionArg::Train => p == Partition::Train,
            PartitionArg::Dev => p == Partition::Dev,
            PartitionArg::Eval => p == Partition::Eval,
            PartitionArg::All => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskModeArg {
    Single,
    ClassAverage,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise the toy corpus: wav/<utt>.wav plus protocol.txt.
    GenToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_bonafide: usize,
        #[arg(long, default_value_t = 1800)]
        n_spoof: usize,
        /// Utterance length in seconds.
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Extract per-segment feature files for every protocol entry.
    Extract {
        #[arg(long)]
        protocol: PathBuf,
        /// Directory holding <utt_id>.wav.
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "lfcc")]
        feature: FeatureKind,
        /// Offline SpecAugment on training-partition utterances.
        #[arg(long, value_enum, default_value_t = Switch::Off)]
        augment: Switch,
        /// Utterances processed in parallel.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Train from a config file; writes best.ckpt, model.toml and metrics.tsv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Score utterances with a trained checkpoint.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PartitionArg::Eval)]
        partition: PartitionArg,
    },
    /// EER and t-DCF report for a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        /// TOML with t-DCF priors, costs and ASV rates.
        #[arg(long)]
        tdcf_params: Option<PathBuf>,
        /// ASV score file; its EER operating point replaces the ASV rates.
        #[arg(long)]
        asv_scores: Option<PathBuf>,
        /// Also write threshold,p_miss,p_fa rows here.
        #[arg(long)]
        det_csv: Option<PathBuf>,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export attention masks as PNG and CSV.
    ExportMasks {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MaskModeArg::ClassAverage)]
        mode: MaskModeArg,
        #[arg(long, value_enum, default_value_t = PartitionArg::Eval)]
        partition: PartitionArg,
        /// Use at most this many utterances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Layer-by-layer architecture listing.
    Describe {
        #[arg(long, default_value = "a0")]
        model: Backbone,
        #[arg(long, default_value = "60x400", value_parser = parse_hw)]
        input: (usize, usize),
    },
    /// Parameter and FLOP totals.
    Count {
        #[arg(long, default_value = "a0")]
        model: Backbone,
        #[arg(long, default_value = "60x400", value_parser = parse_hw)]
        input: (usize, usize),
    },
}

fn parse_hw(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 {
        return Err("input dimensions must be positive".into());
    }
    Ok((h, w))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`, diagnostics to stderr.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::GenToy {
            out: dir,
            n_bonafide,
            n_spoof,
            duration,
            seed,
        } => {
            let spec = ToySpec {
                n_bonafide,
                n_spoof,
                duration_secs: duration,
                seed,
                channel: ChannelParams::default(),
            };
            let d = toy::gen_toy_dataset(spec)?;
            d.write(&dir)?;
            writeln!(
                out,
                "wrote {} utterances to {}",
                d.entries.len(),
                dir.display()
            )?;
        }
        Command::Extract {
            protocol,
            audio,
            out: dir,
            feature,
            augment,
            workers,
            seed,
        } => {
            let entries = read_protocol(&protocol, Partition::Train)?;
            let policy = (augment == Switch::On).then(|| AugmentPolicy::standard(feature, seed));
            let n = extract_all(&entries, &audio, &dir, feature, policy.as_ref(), workers)?;
            writeln!(
                out,
                "wrote {n} {} feature files to {}",
                feature.name(),
                dir.display()
            )?;
        }
        Command::Train {
            config,
            seed,
            epochs,
            quiet,
        } => {
            let mut cfg = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = epochs {
                cfg.schedule.epochs = e;
            }
            let a = train(&cfg, !quiet)?;
            writeln!(
                out,
                "best epoch {} dev EER {:.2}%\ncheckpoint {}\nmetrics {}",
                a.outcome.best_epoch,
                100.0 * a.outcome.best_dev_eer,
                a.checkpoint.display(),
                a.metrics.display()
            )?;
        }
        Command::Score {
            checkpoint,
            protocol,
            features,
            out: path,
            partition,
        } => {
            let (mut net, spec) = Network::load(&checkpoint)?;
            let utts = load_selected(&protocol, &features, spec.feature, partition, None)?;
            let trials = score_utterances(&mut net, &utts)?;
            scorefile::write_scores(&path, &trials)?;
            writeln!(
                out,
                "scored {} utterances into {}",
                trials.len(),
                path.display()
            )?;
        }
        Command::Evaluate {
            scores,
            tdcf_params,
            asv_scores,
            det_csv,
            out: path,
        } => {
            let trials = scorefile::read_scores(&scores)?;
            let mut params = match tdcf_params {
                Some(p) => load_tdcf_params(&p)?,
                None => TdcfParams::default(),
            };
            if let Some(p) = asv_scores {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
                params.asv = asv_rates_from_scores(&scorefile::parse_asv_scores(&text)?)?;
            }
            let report = evaluate(&trials, &params)?;
            let text = report.to_string();
            write!(out, "{text}")?;
            if let Some(p) = path {
                file::write_atomic(&p, text.as_bytes())?;
            }
            if let Some(p) = det_csv {
                file::write_atomic(&p, DetCurve::new(&trials)?.to_csv().as_bytes())?;
            }
        }
        Command::ExportMasks {
            checkpoint,
            protocol,
            features,
            out: dir,
            mode,
            partition,
            limit,
        } => {
            let (mut net, spec) = Network::load(&checkpoint)?;
            let utts = load_selected(&protocol, &features, spec.feature, partition, limit)?;
            let (rows, cols) = spec.feature.dims();
            let mut masks = Vec::new();
            for u in &utts {
                for chunk in u.segments.chunks(EVAL_BATCH) {
                    let refs: Vec<&FeatureMatrix> = chunk.iter().collect();
                    for (seg, o) in chunk.iter().zip(net.infer(&refs, true)?) {
                        masks.push(MaskExport {
                            utt_id: format!("{}__{}", seg.source_id, seg.segment_index),
                            attack_id: match u.entry.key {
                                Key::Bonafide => Key::Bonafide.as_str().to_string(),
                                Key::Spoof => u.entry.attack_label().to_string(),
                            },
                            rows,
                            cols,
                            values: o.mask.expect("requested masks"),
                        });
                    }
                }
            }
            let mode = match mode {
                MaskModeArg::Single => MaskMode::Single,
                MaskModeArg::ClassAverage => MaskMode::ClassAverage,
            };
            let paths = export_masks(&masks, mode, &dir)?;
            writeln!(out, "wrote {} files to {}", paths.len(), dir.display())?;
        }
        Command::Describe { model, input } => {
            let m = build_structure(model, input)?;
            writeln!(out, "model {}", model.name())?;
            write!(out, "{}", m.describe())?;
        }
        Command::Count { model, input } => {
            let m = build_structure(model, input)?;
            writeln!(out, "model {}", model.name())?;
            writeln!(out, "input {}x{}", input.0, input.1)?;
            writeln!(out, "parameters {}", m.count_params())?;
            writeln!(out, "perception parameters {}", m.count_perception_params())?;
            writeln!(out, "flops {}", m.count_flops(input)?)?;
        }
    }
    Ok(())
}

fn build_structure(model: Backbone, input: (usize, usize)) -> Result<EabnModel> {
    let mut store = ParamStore::<f32>::new();
    EabnModel::new(&mut store, &model.config(), input, 0)
}

fn load_tdcf_params(path: &Path) -> Result<TdcfParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let p: TdcfParams =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

fn load_selected(
    protocol: &Path,
    features: &Path,
    kind: FeatureKind,
    partition: PartitionArg,
    limit: Option<usize>,
) -> Result<Vec<crate::train::Utterance>> {
    let entries = read_protocol(protocol, Partition::Eval)?;
    let mut selected: Vec<ProtocolEntry> = entries
        .into_iter()
        .filter(|e| partition.admits(e.partition))
        .collect();
    if let Some(n) = limit {
        selected.truncate(n);
    }
    let mut out = Vec::new();
    for p in Partition::ALL {
        out.extend(load_partition(&selected, p, features, kind)?);
    }
    // restore protocol order
    let pos = |id: &str| selected.iter().position(|e| e.utt_id == id);
    out.sort_by_key(|u| pos(&u.entry.utt_id));
    if out.is_empty() {
        return Err(Error::invalid("no utterances selected"));
    }
    Ok(out)
}

/// Extracts one utterance; training entries get offline SpecAugment when
/// a policy is given.
fn extract_one(
    e: &ProtocolEntry,
    audio: &Path,
    dir: &Path,
    ex: &Extractor,
    policy: Option<&AugmentPolicy>,
) -> Result<usize> {
    let w = read_wav(&audio.join(format!("{}.wav", e.utt_id)))?;
    let mut segs = ex.utterance(&w, &e.utt_id)?;
    for f in &mut segs {
        if let Some(p) = policy.filter(|_| e.partition == Partition::Train) {
            spec_augment_in_place(f, p)?;
        }
        file::write(dir, f)?;
    }
    Ok(segs.len())
}

pub fn extract_all(
    entries: &[ProtocolEntry],
    audio: &Path,
    dir: &Path,
    kind: FeatureKind,
    policy: Option<&AugmentPolicy>,
    workers: usize,
) -> Result<usize> {
    if workers == 0 {
        return Err(Error::invalid("--workers must be at least 1"));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let ex = Extractor::new(kind);
    let counts: Vec<usize> = if workers == 1 {
        entries
            .iter()
            .map(|e| extract_one(e, audio, dir, &ex, policy))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| {
            entries
                .par_iter()
                .map(|e| extract_one(e, audio, dir, &ex, policy))
                .collect::<Result<_>>()
        })?
    };
    Ok(counts.iter().sum())
}
