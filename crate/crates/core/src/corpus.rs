//! Dialogue corpus: the on-disk JSONL format and in-memory types.
//!
//! One JSON object per line:
//! `{"user_id": str, "turns": [{"x": [tokens], "y": [tokens], "o": [0/1 per y token], "r": float}]}`

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One dialogue turn: user question `x`, agent response `y`, per-word
/// personal labels `o` (aligned with `y`), and the turn reward `r`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Turn {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub o: Vec<u8>,
    pub r: f64,
}

/// One complete dialogue for one user.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Dialogue {
    pub user_id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<()> {
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.o.len() != turn.y.len() {
                return Err(Error::LabelLengthMismatch {
                    turn: i,
                    labels: turn.o.len(),
                    words: turn.y.len(),
                });
            }
            if turn.o.iter().any(|&o| o > 1) {
                return Err(Error::Corpus(format!(
                    "dialogue for {}: gate label out of {{0,1}} at turn {i}",
                    self.user_id
                )));
            }
        }
        Ok(())
    }

    pub fn total_reward(&self) -> f64 {
        self.turns.iter().map(|t| t.r).sum()
    }
}

pub fn write_jsonl(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in dialogues {
        serde_json::to_writer(&mut file, d)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Dialogue>> {
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line).map_err(|e| {
            Error::Corpus(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        d.validate()?;
        out.push(d);
    }
    Ok(out)
}

/// Distinct user ids in first-appearance order.
pub fn user_ids(dialogues: &[Dialogue]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for d in dialogues {
        if seen.insert(d.user_id.clone()) {
            out.push(d.user_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn jsonl_round_trip() {
        let dialogues = vec![Dialogue {
            user_id: "u0".into(),
            turns: vec![Turn {
                x: toks("i want coffee ."),
                y: toks("what type ?"),
                o: vec![0, 0, 0],
                r: 0.05,
            }],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_jsonl(&path, &dialogues).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, dialogues);
    }

    #[test]
    fn label_length_mismatch_is_rejected() {
        let d = Dialogue {
            user_id: "u0".into(),
            turns: vec![Turn {
                x: toks("hi"),
                y: toks("a b"),
                o: vec![0],
                r: 0.0,
            }],
        };
        assert!(matches!(
            d.validate(),
            Err(Error::LabelLengthMismatch { .. })
        ));
    }
}
