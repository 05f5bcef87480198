//! The trainable bundle: model structure, weights, loss centres.

use std::path::{Path, PathBuf};

use super::optim::Adam;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::losses::{combined_loss, ClassCenters, LossWeights};
use crate::model::{Backbone, BackboneConfig, Ctx, EabnModel, BONAFIDE, SPOOF};
use crate::tensor::checkpoint::{load_into, read_records, store_records, write_records, Record};
use crate::tensor::{Graph, ParamStore, Tensor};

/// Sidecar describing how to rebuild the model a checkpoint belongs to.
pub const MODEL_FILE: &str = "model.toml";
pub const CHECKPOINT_FILE: &str = "best.ckpt";

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub feature: FeatureKind,
    pub backbone: Backbone,
}

/// Batch-mean loss values of one optimisation step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub total: f64,
    pub triplet_center: f64,
    pub focal: f64,
    pub attention_ce: f64,
}

/// Inference outputs for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentOutput {
    /// `log p_bonafide - log p_spoof` from the perception head.
    pub score: f64,
    pub embedding: Vec<f64>,
    pub mask: Option<Vec<f32>>,
}

pub struct Network {
    pub model: EabnModel,
    pub store: ParamStore<f32>,
    pub centers: ClassCenters,
}

/// Per-segment countermeasure score from the two class probabilities.
pub fn segment_score(p_spoof: f64, p_bonafide: f64) -> f64 {
    p_bonafide.ln() - p_spoof.ln()
}

/// Utterance score: mean of its segment scores.
pub fn utterance_score(segment_scores: &[f64]) -> Result<f64> {
    if segment_scores.is_empty() {
        return Err(Error::invalid("cannot score an utterance without segments"));
    }
    Ok(segment_scores.iter().sum::<f64>() / segment_scores.len() as f64)
}

impl Network {
    pub fn new(backbone: &BackboneConfig, input_hw: (usize, usize), seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let model = EabnModel::new(&mut store, backbone, input_hw, seed)?;
        let centers = ClassCenters::new(&mut store, seed.wrapping_add(1));
        Ok(Network {
            model,
            store,
            centers,
        })
    }

    pub fn from_spec(spec: &ModelSpec, seed: u64) -> Result<Self> {
        Self::new(&spec.backbone.config(), spec.feature.dims(), seed)
    }

    pub fn checkpoint(&self) -> Vec<Record> {
        store_records(&self.store)
    }

    pub fn restore(&mut self, records: &[Record]) -> Result<()> {
        load_into(&mut self.store, records)
    }

    /// Writes `best.ckpt` and `model.toml` into `dir`.
    pub fn save(dir: &Path, spec: &ModelSpec, records: &[Record]) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut bytes = Vec::new();
        write_records(&mut bytes, records)?;
        let path = dir.join(CHECKPOINT_FILE);
        crate::features::file::write_atomic(&path, &bytes)?;
        let text = toml::to_string(spec).expect("model spec serialises");
        crate::features::file::write_atomic(&dir.join(MODEL_FILE), text.as_bytes())?;
        Ok(path)
    }

    /// Loads a checkpoint and the `model.toml` next to it.
    pub fn load(checkpoint: &Path) -> Result<(Self, ModelSpec)> {
        let spec_path = checkpoint.with_file_name(MODEL_FILE);
        let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::file(&spec_path, e))?;
        let spec: ModelSpec = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
        let file = std::fs::File::open(checkpoint).map_err(|e| Error::file(checkpoint, e))?;
        let records = read_records(std::io::BufReader::new(file))?;
        let mut net = Self::from_spec(&spec, 0)?;
        net.restore(&records)?;
        Ok((net, spec))
    }

    pub fn batch(&self, feats: &[&FeatureMatrix]) -> Result<Tensor<f32>> {
        self.model.batch_input(&self.store, feats)
    }

    /// Forward, combined loss, backward, clipping and one Adam update.
    pub fn step(
        &mut self,
        adam: &mut Adam,
        x: Tensor<f32>,
        labels: &[usize],
        weights: &LossWeights,
        lr: f64,
        clip_norm: f64,
    ) -> Result<StepLosses> {
        let mut g = Graph::new();
        let xv = g.input(x);
        let out = {
            let mut ctx = Ctx::new(&mut g, &mut self.store, true);
            self.model.forward(&mut ctx, xv)?
        };
        let cv = g.param(&self.store, self.centers.id());
        let lv = combined_loss(&mut g, &out, cv, labels, weights)?;
        let item = |v| g.value(v).item() as f64;
        let losses = StepLosses {
            total: item(lv.total),
            triplet_center: item(lv.triplet_center),
            focal: item(lv.focal),
            attention_ce: item(lv.attention_ce),
        };
        if !losses.total.is_finite() {
            return Err(Error::Numerical("non-finite training loss".into()));
        }
        g.backward(lv.total)?;
        self.store.zero_grads();
        g.accumulate_param_grads(&mut self.store);
        self.store.clip_grad_norm(clip_norm);
        adam.step(&mut self.store, &g.bound_params(), lr)?;
        Ok(losses)
    }

    /// Inference-mode outputs for a batch of segments.
    pub fn infer(
        &mut self,
        feats: &[&FeatureMatrix],
        with_masks: bool,
    ) -> Result<Vec<SegmentOutput>> {
        let x = self.batch(feats)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let out = {
            let mut ctx = Ctx::new(&mut g, &mut self.store, false);
            self.model.forward(&mut ctx, xv)?
        };
        let logits = g.value(out.pb_logits).data();
        let emb = g.value(out.embedding);
        let d = emb.shape()[1];
        let cells = self.model.input_hw().0 * self.model.input_hw().1;
        let mut res = Vec::with_capacity(feats.len());
        for i in 0..feats.len() {
            // log-softmax difference equals the logit difference exactly
            let score = logits[2 * i + BONAFIDE] as f64 - logits[2 * i + SPOOF] as f64;
            if !score.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite score for {}",
                    feats[i].source_id
                )));
            }
            res.push(SegmentOutput {
                score,
                embedding: emb.data()[i * d..(i + 1) * d]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
                mask: with_masks
                    .then(|| g.value(out.mask).data()[i * cells..(i + 1) * cells].to_vec()),
            });
        }
        Ok(res)
    }

    /// Mean segment score of one utterance.
    pub fn score_utterance(&mut self, segments: &[FeatureMatrix]) -> Result<f64> {
        if segments.is_empty() {
            return Err(Error::invalid("cannot score an utterance without segments"));
        }
        let refs: Vec<&FeatureMatrix> = segments.iter().collect();
        let scores: Vec<f64> = self.infer(&refs, false)?.iter().map(|o| o.score).collect();
        utterance_score(&scores)
    }

    /// Squared distances of an embedding to the (spoof, bonafide) centres.
    pub fn center_distances(&self, embedding: &[f64]) -> [f64; 2] {
        let rows = self.centers.rows(&self.store);
        [SPOOF, BONAFIDE].map(|c| {
            rows[c]
                .iter()
                .zip(embedding)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
    }
}
