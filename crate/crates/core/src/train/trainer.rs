//! Epoch loop with seeded batch order, online SpecAugment, clipped Adam
//! updates and best-dev-EER model selection.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::network::{ModelSpec, Network, StepLosses};
use super::optim::{lr_at_step, Adam};
use crate::data::{read_protocol, Key, Partition, ProtocolEntry};
use crate::error::{Error, Result};
use crate::features::{file, spec_augment, AugmentPolicy, FeatureKind, FeatureMatrix};
use crate::scoring::{compute_eer, Trial};
use crate::tensor::checkpoint::Record;

/// Header of the metrics log; one tab-separated line per epoch follows.
pub const METRICS_HEADER: &str = "epoch\ttrain_loss\tl_tc\tl_focal\tl_ab\tdev_eer\tlr";
pub const METRICS_FILE: &str = "metrics.tsv";
/// Segments per inference batch.
pub const EVAL_BATCH: usize = 32;

/// One protocol entry with its feature segments.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub entry: ProtocolEntry,
    pub segments: Vec<FeatureMatrix>,
}

impl Utterance {
    pub fn label(&self) -> usize {
        self.entry.key.class()
    }
}

/// Loads the feature segments of every entry in `partition`.
pub fn load_partition(
    entries: &[ProtocolEntry],
    partition: Partition,
    dir: &Path,
    kind: FeatureKind,
) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| e.partition == partition) {
        let segments = file::read_utterance(dir, &e.utt_id)?;
        if let Some(bad) = segments.iter().find(|s| s.kind() != kind) {
            return Err(Error::format(format!(
                "{} holds {} features, config expects {}",
                bad.source_id,
                bad.kind().name(),
                kind.name()
            )));
        }
        out.push(Utterance {
            entry: e.clone(),
            segments,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean of the combined loss over the epoch.
    pub train_loss: f64,
    pub triplet_center: f64,
    pub focal: f64,
    pub attention_ce: f64,
    pub dev_eer: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
}

impl EpochLog {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6e}",
            self.epoch,
            self.train_loss,
            self.triplet_center,
            self.focal,
            self.attention_ce,
            self.dev_eer,
            self.lr
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_eer: f64,
    pub best: Vec<Record>,
}

/// Scores of every utterance (mean over its segments), batched.
pub fn score_utterances(net: &mut Network, utts: &[Utterance]) -> Result<Vec<Trial>> {
    let flat: Vec<(usize, &FeatureMatrix)> = utts
        .iter()
        .enumerate()
        .flat_map(|(u, utt)| utt.segments.iter().map(move |s| (u, s)))
        .collect();
    let mut sums = vec![(0.0f64, 0usize); utts.len()];
    for chunk in flat.chunks(EVAL_BATCH) {
        let feats: Vec<&FeatureMatrix> = chunk.iter().map(|&(_, f)| f).collect();
        for (&(u, _), o) in chunk.iter().zip(net.infer(&feats, false)?) {
            sums[u].0 += o.score;
            sums[u].1 += 1;
        }
    }
    utts.iter()
        .zip(sums)
        .map(|(u, (s, n))| {
            if n == 0 {
                return Err(Error::invalid(format!(
                    "{} has no segments",
                    u.entry.utt_id
                )));
            }
            Ok(Trial::new(
                u.entry.utt_id.clone(),
                u.entry.attack_label(),
                u.entry.key,
                s / n as f64,
            ))
        })
        .collect()
}

/// Per-row mean and standard deviation over all training segments.
pub fn feature_stats(utts: &[Utterance]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = utts
        .iter()
        .flat_map(|u| &u.segments)
        .next()
        .ok_or_else(|| Error::invalid("no training segments"))?;
    let (rows, cols) = (first.rows(), first.cols());
    let mut sum = vec![0.0f64; rows];
    let mut sq = vec![0.0f64; rows];
    let mut n = 0usize;
    for s in utts.iter().flat_map(|u| &u.segments) {
        for (r, row) in s.values().chunks(cols).enumerate() {
            for &v in row {
                sum[r] += v as f64;
                sq[r] += (v as f64) * (v as f64);
            }
        }
        n += cols;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let std = sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| (q / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
        .collect();
    Ok((mean, std))
}

fn class_counts(utts: &[Utterance]) -> [usize; 2] {
    let mut c = [0; 2];
    for u in utts {
        c[u.label()] += u.segments.len();
    }
    c
}

/// Derives a per-epoch stream seed so every epoch sees fresh batch orders
/// and augmentation masks.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `net` in place and leaves it holding the best-epoch weights.
/// `on_epoch` sees each epoch's log and, on improvement, the new best
/// checkpoint.
/// Called after every epoch with the log row and, when the epoch improved
/// on the best dev EER, the new best weights.
pub type EpochHook<'a> = dyn FnMut(&EpochLog, Option<&[Record]>) -> Result<()> + 'a;

pub fn fit(
    cfg: &TrainConfig,
    net: &mut Network,
    train: &[Utterance],
    dev: &[Utterance],
    on_epoch: &mut EpochHook<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let counts = class_counts(train);
    let weights = cfg.loss.weights(counts)?;
    let dev_keys: Vec<Key> = dev.iter().map(|u| u.entry.key).collect();
    if !dev_keys.contains(&Key::Bonafide) || !dev_keys.contains(&Key::Spoof) {
        return Err(Error::invalid(
            "the dev partition needs both bona fide and spoof utterances",
        ));
    }
    if cfg.model.input_norm {
        let (mean, std) = feature_stats(train)?;
        net.model.set_input_norm(&mut net.store, &mean, &std)?;
    }
    let samples: Vec<(&FeatureMatrix, usize)> = train
        .iter()
        .flat_map(|u| u.segments.iter().map(move |s| (s, u.label())))
        .collect();
    let kind = samples[0].0.kind();
    let mut adam = Adam::new(&net.store, cfg.optimizer.adam())?;
    let mut step = 0u64;
    let mut epochs = Vec::with_capacity(cfg.schedule.epochs);
    let mut best: Option<(usize, f64, Vec<Record>)> = None;
    for epoch in 1..=cfg.schedule.epochs {
        let stream = epoch_seed(cfg.seed, epoch);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream));
        let policy = cfg.augment.policy(kind, stream);
        let mut sums = StepLosses::default();
        let mut lr = 0.0;
        for (b, chunk) in order.chunks(cfg.schedule.batch_size).enumerate() {
            let feats = augmented(chunk.iter().map(|&i| samples[i].0), &policy)?;
            let refs: Vec<&FeatureMatrix> = feats.iter().collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].1).collect();
            step += 1;
            lr = lr_at_step(step, cfg.schedule.warmup_steps, cfg.optimizer.peak_lr)?;
            let x = net.batch(&refs)?;
            let l = net
                .step(&mut adam, x, &labels, &weights, lr, cfg.optimizer.clip_norm)
                .map_err(|e| match e {
                    Error::Numerical(m) => {
                        Error::Numerical(format!("{m} at epoch {epoch}, batch {b}"))
                    }
                    other => other,
                })?;
            let n = chunk.len() as f64;
            sums.total += l.total * n;
            sums.triplet_center += l.triplet_center * n;
            sums.focal += l.focal * n;
            sums.attention_ce += l.attention_ce * n;
        }
        let n = samples.len() as f64;
        let dev_eer = compute_eer(&score_utterances(net, dev)?)?.eer;
        let log = EpochLog {
            epoch,
            train_loss: sums.total / n,
            triplet_center: sums.triplet_center / n,
            focal: sums.focal / n,
            attention_ce: sums.attention_ce / n,
            dev_eer,
            lr,
        };
        let improved = best.as_ref().is_none_or(|(_, e, _)| dev_eer < *e);
        if improved {
            best = Some((epoch, dev_eer, net.checkpoint()));
        }
        on_epoch(
            &log,
            improved.then(|| best.as_ref().expect("just set").2.as_slice()),
        )?;
        epochs.push(log);
    }
    let (best_epoch, best_dev_eer, records) = best.expect("at least one epoch");
    net.restore(&records)?;
    Ok(TrainOutcome {
        epochs,
        best_epoch,
        best_dev_eer,
        best: records,
    })
}

fn augmented<'a>(
    feats: impl Iterator<Item = &'a FeatureMatrix>,
    policy: &AugmentPolicy,
) -> Result<Vec<FeatureMatrix>> {
    feats
        .map(|f| {
            if policy.apply_probability > 0.0 {
                spec_augment(f, policy)
            } else {
                Ok(f.clone())
            }
        })
        .collect()
}

/// Paths written by [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub outcome: TrainOutcome,
}

/// Full run from a config: loads train/dev features, trains, writes
/// `best.ckpt`, `model.toml` and `metrics.tsv` into the output directory.
pub fn train(cfg: &TrainConfig, progress: bool) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let entries = read_protocol(&cfg.data.protocol, Partition::Train)?;
    let kind = cfg.data.feature;
    let train_set = load_partition(&entries, Partition::Train, &cfg.data.features, kind)?;
    let dev_set = load_partition(&entries, Partition::Dev, &cfg.data.features, kind)?;
    if train_set.is_empty() {
        return Err(Error::invalid("protocol has no training utterances"));
    }
    let spec = ModelSpec {
        feature: kind,
        backbone: cfg.model.backbone,
    };
    let mut net = Network::from_spec(&spec, cfg.seed)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    let metrics = out.join(METRICS_FILE);
    let mut log_text = format!("{METRICS_HEADER}\n");
    let mut checkpoint = out.join(super::network::CHECKPOINT_FILE);
    let started = std::time::Instant::now();
    let outcome = fit(cfg, &mut net, &train_set, &dev_set, &mut |log, best| {
        log_text.push_str(&log.tsv_line());
        log_text.push('\n');
        file::write_atomic(&metrics, log_text.as_bytes())?;
        if let Some(records) = best {
            checkpoint = Network::save(out, &spec, records)?;
        }
        if progress {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(
                err,
                "epoch {} loss {:.4} dev EER {:.2}%{} [{:.0}s]",
                log.epoch,
                log.train_loss,
                100.0 * log.dev_eer,
                if best.is_some() { " *" } else { "" },
                started.elapsed().as_secs_f64()
            );
        }
        Ok(())
    })?;
    Ok(TrainArtifacts {
        checkpoint,
        metrics,
        outcome,
    })
}
