use std::collections::BTreeMap;
use std::fmt;

use super::{eer_from_curve, tdcf_from_curve, DetCurve, Eer, TdcfCurve, TdcfParams, Trial};
use crate::data::Key;
use crate::error::Result;

/// Summary of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub n_bonafide: usize,
    pub n_spoof: usize,
    pub eer: Eer,
    pub tdcf: TdcfCurve,
    /// EER of all bona fide trials against each attack's spoof trials.
    pub per_attack: Vec<(String, usize, Eer)>,
}

pub fn evaluate(trials: &[Trial], params: &TdcfParams) -> Result<Report> {
    let curve = DetCurve::new(trials)?;
    let eer = eer_from_curve(&curve);
    let tdcf = tdcf_from_curve(&curve, params)?;
    let bona: Vec<Trial> = trials
        .iter()
        .filter(|t| t.key == Key::Bonafide)
        .cloned()
        .collect();
    let mut attacks: BTreeMap<&str, Vec<Trial>> = BTreeMap::new();
    for t in trials.iter().filter(|t| t.key == Key::Spoof) {
        attacks.entry(&t.attack_id).or_default().push(t.clone());
    }
    let mut per_attack = Vec::with_capacity(attacks.len());
    for (attack, spoof) in attacks {
        let n = spoof.len();
        let mut subset = bona.clone();
        subset.extend(spoof);
        per_attack.push((
            attack.to_string(),
            n,
            eer_from_curve(&DetCurve::new(&subset)?),
        ));
    }
    Ok(Report {
        n_bonafide: bona.len(),
        n_spoof: trials.len() - bona.len(),
        eer,
        tdcf,
        per_attack,
    })
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trials: {} bonafide, {} spoof",
            self.n_bonafide, self.n_spoof
        )?;
        writeln!(
            f,
            "EER: {:.2}% (threshold {:.6})",
            100.0 * self.eer.eer,
            self.eer.threshold
        )?;
        writeln!(f, "min t-DCF (normalized): {:.4}", self.tdcf.normalized_min)?;
        writeln!(f, "min t-DCF (raw): {:.6}", self.tdcf.min)?;
        writeln!(
            f,
            "t-DCF constants: C1 = {:.6}, C2 = {:.6}",
            self.tdcf.c1, self.tdcf.c2
        )?;
        writeln!(f, "per-attack EER:")?;
        for (attack, n, e) in &self.per_attack {
            writeln!(f, "  {attack}\t{n}\t{:.2}%", 100.0 * e.eer)?;
        }
        Ok(())
    }
}
