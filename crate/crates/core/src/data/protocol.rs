//! Five-field protocol lines: `<speaker> <utt> <env|-> <attack|-> <key>`.
//! The partition is not a column; it is carried by the entry and encoded
//! in challenge-style utterance ids (`_T_`, `_D_`, `_E_`) when present.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Bonafide,
    Spoof,
}

impl Key {
    pub fn as_str(self) -> &'static str {
        match self {
            Key::Bonafide => "bonafide",
            Key::Spoof => "spoof",
        }
    }

    /// Class index used by the model heads.
    pub fn class(self) -> usize {
        match self {
            Key::Bonafide => crate::model::BONAFIDE,
            Key::Spoof => crate::model::SPOOF,
        }
    }
}

impl FromStr for Key {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" => Ok(Key::Bonafide),
            "spoof" => Ok(Key::Spoof),
            _ => Err(Error::format(format!(
                "unknown key {s:?} (expected bonafide or spoof)"
            ))),
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Dev,
    Eval,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Dev, Partition::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        }
    }

    /// Letter used in challenge-style utterance ids.
    pub fn letter(self) -> char {
        match self {
            Partition::Train => 'T',
            Partition::Dev => 'D',
            Partition::Eval => 'E',
        }
    }

    /// Infers the partition from an id such as `LA_T_1138215`.
    pub fn from_utt_id(id: &str) -> Option<Self> {
        id.split('_').find_map(|part| match part {
            "T" => Some(Partition::Train),
            "D" => Some(Partition::Dev),
            "E" => Some(Partition::Eval),
            _ => None,
        })
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            _ => Err(Error::invalid(format!("unknown partition {s:?}"))),
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolEntry {
    pub speaker_id: String,
    pub utt_id: String,
    /// Third column (environment id for replay data); `None` when `-`.
    pub environment: Option<String>,
    /// `None` for bona fide speech.
    pub attack_id: Option<String>,
    pub key: Key,
    pub partition: Partition,
}

impl ProtocolEntry {
    pub fn attack_label(&self) -> &str {
        self.attack_id.as_deref().unwrap_or("-")
    }
}

fn optional(tok: &str) -> Option<String> {
    (tok != "-").then(|| tok.to_string())
}

/// Parses protocol text. Entries take `partition` unless their id encodes
/// one. Blank lines are skipped; malformed lines fail with their line number.
pub fn parse_protocol(text: &str, partition: Partition) -> Result<Vec<ProtocolEntry>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let at = |msg: String| Error::format(format!("protocol line {}: {msg}", i + 1));
        if fields.len() != 5 {
            return Err(at(format!("expected 5 fields, found {}", fields.len())));
        }
        let key: Key = fields[4].parse().map_err(|e: Error| at(e.to_string()))?;
        let entry = ProtocolEntry {
            speaker_id: fields[0].to_string(),
            utt_id: fields[1].to_string(),
            environment: optional(fields[2]),
            attack_id: optional(fields[3]),
            key,
            partition: Partition::from_utt_id(fields[1]).unwrap_or(partition),
        };
        if !seen.insert((entry.partition, entry.utt_id.clone())) {
            return Err(at(format!("duplicate utterance id {}", entry.utt_id)));
        }
        out.push(entry);
    }
    if out.is_empty() {
        eprintln!("warning: protocol is empty");
    }
    Ok(out)
}

pub fn serialize_protocol(entries: &[ProtocolEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            e.speaker_id,
            e.utt_id,
            e.environment.as_deref().unwrap_or("-"),
            e.attack_label(),
            e.key
        ));
    }
    out
}

pub fn read_protocol(path: &Path, partition: Partition) -> Result<Vec<ProtocolEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_protocol(&text, partition).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn challenge_lines() {
        let e = parse_protocol("LA_0079 LA_T_1138215 - A01 spoof\n", Partition::Eval).unwrap();
        assert_eq!(e[0].key, Key::Spoof);
        assert_eq!(e[0].attack_id.as_deref(), Some("A01"));
        assert_eq!(e[0].partition, Partition::Train);
        let e = parse_protocol("PA_0001 PA_T_0000001 - - bonafide", Partition::Dev).unwrap();
        assert_eq!(e[0].key, Key::Bonafide);
        assert_eq!(e[0].attack_id, None);
    }

    #[test]
    fn empty_protocol_is_empty() {
        assert!(parse_protocol("", Partition::Train).unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err =
            parse_protocol("a b - - bonafide\na c - - genuine\n", Partition::Train).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_protocol("a b - bonafide\n", Partition::Train).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_protocol("a b - - spoof\na b - - spoof\n", Partition::Train).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn serialize_roundtrip() {
        let text = "LA_0079 LA_D_1 - A01 spoof\nLA_0080 LA_D_2 env1 - bonafide\n";
        let entries = parse_protocol(text, Partition::Dev).unwrap();
        assert_eq!(serialize_protocol(&entries), text);
        assert_eq!(
            parse_protocol(&serialize_protocol(&entries), Partition::Dev).unwrap(),
            entries
        );
    }
}
