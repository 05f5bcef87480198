//! Text score files, one trial per line: `<utt_id> <attack_id> <key> <score>`.
//! ASV score files end every line with `<target|nontarget|spoof> <score>`.

use std::fmt::Write as _;
use std::path::Path;

use super::{AsvKey, Trial};
use crate::error::{Error, Result};

pub fn format_scores(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        // shortest representation that round-trips exactly
        writeln!(out, "{} {} {} {}", t.utt_id, t.attack_id, t.key, t.score).expect("string write");
    }
    out
}

fn score_token(tok: &str, line: usize) -> Result<f64> {
    let s: f64 = tok
        .parse()
        .map_err(|_| Error::format(format!("score line {line}: bad score {tok:?}")))?;
    if !s.is_finite() {
        return Err(Error::format(format!(
            "score line {line}: non-finite score"
        )));
    }
    Ok(s)
}

pub fn parse_scores(text: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 4 {
            return Err(Error::format(format!(
                "score line {}: expected 4 fields, found {}",
                i + 1,
                f.len()
            )));
        }
        let key = f[2]
            .parse()
            .map_err(|e: Error| Error::format(format!("score line {}: {e}", i + 1)))?;
        out.push(Trial::new(f[0], f[1], key, score_token(f[3], i + 1)?));
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<Trial>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_scores(&text)
}

pub fn write_scores(path: &Path, trials: &[Trial]) -> Result<()> {
    crate::features::file::write_atomic(path, format_scores(trials).as_bytes())
}

pub fn parse_asv_scores(text: &str) -> Result<Vec<(AsvKey, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() < 2 {
            return Err(Error::format(format!(
                "ASV score line {}: too few fields",
                i + 1
            )));
        }
        let key = match f[f.len() - 2] {
            "target" => AsvKey::Target,
            "nontarget" => AsvKey::Nontarget,
            "spoof" => AsvKey::Spoof,
            other => {
                return Err(Error::format(format!(
                    "ASV score line {}: unknown key {other:?}",
                    i + 1
                )));
            }
        };
        out.push((key, score_token(f[f.len() - 1], i + 1)?));
    }
    Ok(out)
}
