//! Countermeasure evaluation: error rates, equal error rate and the tandem
//! detection cost function, plus the score-file format.

mod report;
pub mod scorefile;

pub use report::{evaluate, Report};

use crate::data::Key;
use crate::error::{Error, Result};

/// One scored utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub utt_id: String,
    /// Attack/system id, `-` for bona fide speech.
    pub attack_id: String,
    pub key: Key,
    pub score: f64,
}

impl Trial {
    pub fn new(
        utt_id: impl Into<String>,
        attack_id: impl Into<String>,
        key: Key,
        score: f64,
    ) -> Self {
        Trial {
            utt_id: utt_id.into(),
            attack_id: attack_id.into(),
            key,
            score,
        }
    }
}

fn split_scores(trials: &[Trial]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut bona = Vec::new();
    let mut spoof = Vec::new();
    for t in trials {
        if !t.score.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite score for {}",
                t.utt_id
            )));
        }
        match t.key {
            Key::Bonafide => bona.push(t.score),
            Key::Spoof => spoof.push(t.score),
        }
    }
    if bona.is_empty() || spoof.is_empty() {
        return Err(Error::invalid(format!(
            "need both classes, got {} bonafide and {} spoof trials",
            bona.len(),
            spoof.len()
        )));
    }
    Ok((bona, spoof))
}

/// `(P_miss, P_fa)` at threshold `s`: bona fide trials scoring `<= s` are
/// missed, spoof trials scoring `> s` are accepted.
pub fn error_rates(trials: &[Trial], s: f64) -> Result<(f64, f64)> {
    let (bona, spoof) = split_scores(trials)?;
    let miss = bona.iter().filter(|&&b| b <= s).count();
    let fa = spoof.iter().filter(|&&x| x > s).count();
    Ok((
        miss as f64 / bona.len() as f64,
        fa as f64 / spoof.len() as f64,
    ))
}

/// `-inf`, midpoints between consecutive distinct scores, `+inf`.
pub fn candidate_thresholds(trials: &[Trial]) -> Vec<f64> {
    let mut scores: Vec<f64> = trials.iter().map(|t| t.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut out = Vec::with_capacity(scores.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(scores.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Error rates at every candidate threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct DetCurve {
    pub thresholds: Vec<f64>,
    pub p_miss: Vec<f64>,
    pub p_fa: Vec<f64>,
}

impl DetCurve {
    /// One sorted sweep over the trials.
    pub fn new(trials: &[Trial]) -> Result<Self> {
        let (mut bona, mut spoof) = split_scores(trials)?;
        bona.sort_by(f64::total_cmp);
        spoof.sort_by(f64::total_cmp);
        let thresholds = candidate_thresholds(trials);
        let (nb, ns) = (bona.len() as f64, spoof.len() as f64);
        let (mut ib, mut is) = (0, 0);
        let mut p_miss = Vec::with_capacity(thresholds.len());
        let mut p_fa = Vec::with_capacity(thresholds.len());
        for &s in &thresholds {
            while ib < bona.len() && bona[ib] <= s {
                ib += 1;
            }
            while is < spoof.len() && spoof[is] <= s {
                is += 1;
            }
            p_miss.push(ib as f64 / nb);
            p_fa.push((spoof.len() - is) as f64 / ns);
        }
        Ok(DetCurve {
            thresholds,
            p_miss,
            p_fa,
        })
    }

    /// `threshold,p_miss,p_fa` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,p_miss,p_fa\n");
        for i in 0..self.thresholds.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.thresholds[i], self.p_miss[i], self.p_fa[i]
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eer {
    pub eer: f64,
    /// Threshold at (or nearest to) the crossing.
    pub threshold: f64,
}

/// Equal error rate from the sampled miss/false-accept curves: the rate at
/// an exact crossing if one exists, otherwise linear interpolation between
/// the two operating points that bracket it.
pub fn eer_from_curve(curve: &DetCurve) -> Eer {
    let d: Vec<f64> = curve
        .p_miss
        .iter()
        .zip(&curve.p_fa)
        .map(|(m, f)| m - f)
        .collect();
    if let Some(i) = d.iter().position(|&x| x == 0.0) {
        return Eer {
            eer: curve.p_miss[i],
            threshold: curve.thresholds[i],
        };
    }
    // d runs from -1 at -inf to +1 at +inf, so a sign change exists
    let i = d
        .windows(2)
        .position(|w| w[0] < 0.0 && w[1] > 0.0)
        .expect("miss-fa difference changes sign");
    let t = d[i] / (d[i] - d[i + 1]);
    let eer = curve.p_miss[i] + t * (curve.p_miss[i + 1] - curve.p_miss[i]);
    let threshold = if t < 0.5 {
        curve.thresholds[i]
    } else {
        curve.thresholds[i + 1]
    };
    Eer { eer, threshold }
}

pub fn compute_eer(trials: &[Trial]) -> Result<Eer> {
    Ok(eer_from_curve(&DetCurve::new(trials)?))
}

/// Operating point of the fixed speaker-verification system.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AsvRates {
    pub p_miss: f64,
    pub p_fa: f64,
    /// Fraction of spoof trials the ASV rejects.
    pub p_miss_spoof: f64,
}

impl Default for AsvRates {
    fn default() -> Self {
        AsvRates {
            p_miss: 0.05,
            p_fa: 0.01,
            p_miss_spoof: 0.5,
        }
    }
}

/// Cost model of the tandem detection cost function.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TdcfParams {
    pub pi_tar: f64,
    pub pi_non: f64,
    pub pi_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub asv: AsvRates,
}

impl Default for TdcfParams {
    fn default() -> Self {
        TdcfParams {
            pi_tar: 0.9405,
            pi_non: 0.0095,
            pi_spoof: 0.05,
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
            asv: AsvRates::default(),
        }
    }
}

impl TdcfParams {
    pub fn validate(&self) -> Result<()> {
        let priors = self.pi_tar + self.pi_non + self.pi_spoof;
        if (priors - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("priors sum to {priors}, not 1")));
        }
        if [self.pi_tar, self.pi_non, self.pi_spoof]
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Config("priors must lie in [0, 1]".into()));
        }
        if [self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm]
            .iter()
            .any(|&c| !(c > 0.0))
        {
            return Err(Error::Config("costs must be positive".into()));
        }
        let a = self.asv;
        if [a.p_miss, a.p_fa, a.p_miss_spoof]
            .iter()
            .any(|&r| !(0.0..=1.0).contains(&r))
        {
            return Err(Error::Config("ASV rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `C1 = pi_tar (C_miss_cm - C_miss_asv P_miss_asv) - pi_non C_fa_asv P_fa_asv`.
    pub fn c1(&self) -> f64 {
        self.pi_tar * (self.c_miss_cm - self.c_miss_asv * self.asv.p_miss)
            - self.pi_non * self.c_fa_asv * self.asv.p_fa
    }

    /// `C2 = C_fa_cm pi_spoof (1 - P_miss_spoof_asv)`.
    pub fn c2(&self) -> f64 {
        self.c_fa_cm * self.pi_spoof * (1.0 - self.asv.p_miss_spoof)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdcfCurve {
    pub c1: f64,
    pub c2: f64,
    pub thresholds: Vec<f64>,
    /// Raw `C1 P_miss(s) + C2 P_fa(s)` at each threshold.
    pub values: Vec<f64>,
    pub min: f64,
    pub min_threshold: f64,
    /// `min / min(C1, C2)`.
    pub normalized_min: f64,
}

pub fn tdcf_from_curve(curve: &DetCurve, p: &TdcfParams) -> Result<TdcfCurve> {
    p.validate()?;
    let (c1, c2) = (p.c1(), p.c2());
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::Config(format!(
            "degenerate t-DCF cost model: C1 = {c1}, C2 = {c2} (both must be > 0)"
        )));
    }
    let values: Vec<f64> = curve
        .p_miss
        .iter()
        .zip(&curve.p_fa)
        .map(|(m, f)| c1 * m + c2 * f)
        .collect();
    let (best, &min) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least two thresholds");
    Ok(TdcfCurve {
        c1,
        c2,
        thresholds: curve.thresholds.clone(),
        min,
        min_threshold: curve.thresholds[best],
        normalized_min: min / c1.min(c2),
        values,
    })
}

pub fn tdcf_curve(trials: &[Trial], p: &TdcfParams) -> Result<TdcfCurve> {
    tdcf_from_curve(&DetCurve::new(trials)?, p)
}

/// Key of an ASV trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsvKey {
    Target,
    Nontarget,
    Spoof,
}

/// ASV rates at the ASV system's own EER threshold (target vs nontarget).
pub fn asv_rates_from_scores(scores: &[(AsvKey, f64)]) -> Result<AsvRates> {
    let as_trials = |key: AsvKey, as_key: Key| {
        scores
            .iter()
            .filter(move |(k, _)| *k == key)
            .map(move |&(_, s)| Trial::new("", "", as_key, s))
    };
    let trials: Vec<Trial> = as_trials(AsvKey::Target, Key::Bonafide)
        .chain(as_trials(AsvKey::Nontarget, Key::Spoof))
        .collect();
    let thr = compute_eer(&trials)?.threshold;
    let (p_miss, p_fa) = error_rates(&trials, thr)?;
    let spoof: Vec<f64> = scores
        .iter()
        .filter(|(k, _)| *k == AsvKey::Spoof)
        .map(|&(_, s)| s)
        .collect();
    if spoof.is_empty() {
        return Err(Error::invalid("ASV scores contain no spoof trials"));
    }
    let p_miss_spoof = spoof.iter().filter(|&&s| s <= thr).count() as f64 / spoof.len() as f64;
    Ok(AsvRates {
        p_miss,
        p_fa,
        p_miss_spoof,
    })
}
