//! Training objective: triplet-center loss on the embedding plus focal loss
//! on the perception head, and weighted cross-entropy on the attention head.
//!
//! `total = mean_i(L_tc + lambda_focal * L_focal) + lambda_ab * mean_i(L_ce)`

use crate::error::{Error, Result};
use crate::model::{Builder, EabnVars, EMBEDDING_DIM};
use crate::tensor::{Float, Graph, ParamId, ParamStore, Var, PROB_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_ab: f64,
    pub lambda_focal: f64,
    pub margin: f64,
    /// Focal modulation exponent.
    pub focal_gamma: f64,
    /// Focal alpha per class, indexed spoof/bonafide.
    pub focal_alpha: [f64; 2],
    /// Attention-branch cross-entropy weight per class.
    pub ce_weights: [f64; 2],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_ab: 0.1,
            lambda_focal: 0.005,
            margin: 32.0,
            focal_gamma: 0.005,
            focal_alpha: [1.0, 1.0],
            ce_weights: [1.0, 1.0],
        }
    }
}

impl LossWeights {
    /// Defaults with class weights derived from training counts.
    pub fn for_counts(counts: [usize; 2]) -> Result<Self> {
        Ok(LossWeights {
            focal_alpha: focal_alpha(counts)?,
            ce_weights: class_weights(counts)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_ab, self.lambda_focal, self.focal_gamma]
            .into_iter()
            .chain(self.focal_alpha)
            .chain(self.ce_weights);
        for v in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "loss weight {v} must be finite and >= 0"
                )));
            }
        }
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin {} must be > 0", self.margin)));
        }
        Ok(())
    }
}

fn check_counts(counts: [usize; 2]) -> Result<()> {
    if counts.contains(&0) {
        return Err(Error::invalid(format!(
            "both classes need training samples, got {counts:?}"
        )));
    }
    Ok(())
}

/// Inverse class frequency scaled so the majority class weighs 1.
pub fn class_weights(counts: [usize; 2]) -> Result<[f64; 2]> {
    check_counts(counts)?;
    let max = counts[0].max(counts[1]) as f64;
    Ok(counts.map(|c| max / c as f64))
}

/// Inverse class frequency normalised to mean 1.
pub fn focal_alpha(counts: [usize; 2]) -> Result<[f64; 2]> {
    check_counts(counts)?;
    let inv = counts.map(|c| 1.0 / c as f64);
    let mean = (inv[0] + inv[1]) / 2.0;
    Ok(inv.map(|v| v / mean))
}

/// `-alpha (1 - p)^gamma ln p`, with `p` clamped to `[1e-7, 1]`.
pub fn focal_loss(p_true: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p_true.clamp(PROB_FLOOR, 1.0);
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

/// `max(0, D(f, c_label) - min_{j != label} D(f, c_j) + margin)` with
/// squared Euclidean `D`.
pub fn triplet_center_loss(
    embedding: &[f64],
    label: usize,
    centers: &[Vec<f64>],
    margin: f64,
) -> f64 {
    let dist = |c: &[f64]| -> f64 {
        embedding
            .iter()
            .zip(c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let own = dist(&centers[label]);
    let other = centers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, c)| dist(c))
        .fold(f64::INFINITY, f64::min);
    (own - other + margin).max(0.0)
}

/// `-w ln p`, with `p` clamped below at 1e-7.
pub fn weighted_ce(p_true: f64, weight: f64) -> f64 {
    -weight * p_true.max(PROB_FLOOR).ln()
}

/// Learnable class centers `[2, 256]`, stored under `loss.centers`.
#[derive(Clone, Copy, Debug)]
pub struct ClassCenters {
    id: ParamId,
}

pub const CENTERS_NAME: &str = "loss.centers";

impl ClassCenters {
    /// Unit-Gaussian initial centers.
    pub fn new<T: Float>(store: &mut ParamStore<T>, seed: u64) -> Self {
        let mut b = Builder::new(store, seed);
        ClassCenters {
            id: b.normal(CENTERS_NAME, &[2, EMBEDDING_DIM], 1.0),
        }
    }

    /// Looks up centers registered earlier (e.g. loaded from a checkpoint).
    pub fn find<T: Float>(store: &ParamStore<T>) -> Result<Self> {
        store
            .find(CENTERS_NAME)
            .map(|id| ClassCenters { id })
            .ok_or_else(|| Error::format(format!("no {CENTERS_NAME} in parameter store")))
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn rows<T: Float>(&self, store: &ParamStore<T>) -> Vec<Vec<f64>> {
        store
            .value(self.id)
            .data()
            .chunks(EMBEDDING_DIM)
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect()
    }
}

/// Batch-mean components and the total, as graph nodes.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub triplet_center: Var,
    pub focal: Var,
    pub attention_ce: Var,
}

/// Builds the combined objective for a batch with class labels
/// (0 = spoof, 1 = bonafide).
pub fn combined_loss<T: Float>(
    g: &mut Graph<T>,
    out: &EabnVars,
    centers: Var,
    labels: &[usize],
    w: &LossWeights,
) -> Result<LossVars> {
    w.validate()?;
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
    }
    let dist = g.sqdist(out.embedding, centers)?;
    let own = g.gather(dist, labels)?;
    let other = g.min_excluding(dist, labels)?;
    let neg_other = g.mul_scalar(other, -T::one());
    let gap = g.add(own, neg_other)?;
    let shifted = g.add_scalar(gap, T::cst(w.margin));
    let tc = g.relu(shifted);

    let alpha: Vec<T> = labels.iter().map(|&l| T::cst(w.focal_alpha[l])).collect();
    let p_pb = g.gather(out.pb_probs, labels)?;
    let focal = g.focal(p_pb, &alpha, T::cst(w.focal_gamma))?;

    let ce_w: Vec<T> = labels.iter().map(|&l| T::cst(w.ce_weights[l])).collect();
    let p_ab = g.gather(out.ab_probs, labels)?;
    let ce = g.weighted_nll(p_ab, &ce_w)?;

    let scaled_focal = g.mul_scalar(focal, T::cst(w.lambda_focal));
    let pb = g.add(tc, scaled_focal)?;
    let pb_mean = g.mean(pb);
    let ce_mean = g.mean(ce);
    let scaled_ce = g.mul_scalar(ce_mean, T::cst(w.lambda_ab));
    let total = g.add(pb_mean, scaled_ce)?;
    Ok(LossVars {
        total,
        triplet_center: g.mean(tc),
        focal: g.mean(focal),
        attention_ce: ce_mean,
    })
}
