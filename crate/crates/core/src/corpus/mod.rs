//! Command corpora: tokenization, JSON Lines files and synthetic generation.

mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{parse_at_level, LiftedRewardFunction};
use crate::world::Level;

pub use synth::{gen_synthetic_corpus, Templates};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("command has no words")]
    EmptyCommand,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("bad template file: {0}")]
    Templates(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases, drops punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Result<Vec<String>, CorpusError> {
    let cleaned: String =
        text.chars().filter(|c| !c.is_ascii_punctuation() && !c.is_ascii_control() || c.is_whitespace()).collect();
    let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_lowercase).collect();
    if tokens.is_empty() {
        return Err(CorpusError::EmptyCommand);
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub command: String,
    pub tokens: Vec<String>,
    pub level: Level,
    pub reward: LiftedRewardFunction,
}

impl CorpusEntry {
    pub fn new(command: &str, reward: LiftedRewardFunction) -> Result<Self, CorpusError> {
        Ok(CorpusEntry { command: command.to_string(), tokens: tokenize(command)?, level: reward.level, reward })
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    command: String,
    level: i64,
    reward: String,
}

/// Reads JSON Lines `{"command": ..., "level": 0|1|2, "reward": ...}`.
/// Blank lines are skipped.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema { line: i + 1, message };
        let raw: Line = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let level = usize::try_from(raw.level)
            .ok()
            .and_then(Level::from_index)
            .ok_or_else(|| schema(format!("level {} is not 0, 1 or 2", raw.level)))?;
        let reward = parse_at_level(&raw.reward, level).map_err(|e| schema(e.to_string()))?;
        let tokens = tokenize(&raw.command).map_err(|e| schema(e.to_string()))?;
        out.push(CorpusEntry { command: raw.command, tokens, level, reward });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusEntry>, CorpusError> {
    read_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus(mut writer: impl Write, entries: &[CorpusEntry]) -> Result<(), CorpusError> {
    for e in entries {
        let line = Line { command: e.command.clone(), level: e.level.index() as i64, reward: e.reward.to_string() };
        serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, entries: &[CorpusEntry]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

/// Entries per level, indexed by level.
pub fn level_counts(entries: &[CorpusEntry]) -> [usize; 3] {
    let mut counts = [0; 3];
    for e in entries {
        counts[e.level.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::parse_machine_string;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Go to the green room.").unwrap(), ["go", "to", "the", "green", "room"]);
        assert_eq!(tokenize("GO NORTH").unwrap(), ["go", "north"]);
        assert!(matches!(tokenize("..."), Err(CorpusError::EmptyCommand)));
        assert!(matches!(tokenize("   "), Err(CorpusError::EmptyCommand)));
        assert_eq!(tokenize("go to door, enter red room").unwrap(), ["go", "to", "door", "enter", "red", "room"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let entries = vec![
            CorpusEntry::new("Go north.", parse_machine_string("goNorth").unwrap()).unwrap(),
            CorpusEntry::new("go to the green room", parse_machine_string("agentInRegion agent0 roomIsGreen").unwrap())
                .unwrap(),
            CorpusEntry::new(
                "go to the door",
                parse_at_level("agentInRegion agent0 roomIsRed", Level::L1).unwrap(),
            )
            .unwrap(),
        ];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &entries).unwrap();
        let back = read_corpus(&buf[..]).unwrap();
        assert_eq!(back, entries);
        assert_eq!(level_counts(&back), [1, 1, 1]);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let text = "{\"command\": \"go north\", \"level\": 0, \"reward\": \"goNorth\"}\n\
                    {\"command\": \"go north\", \"level\": 3, \"reward\": \"goNorth\"}\n";
        match read_corpus(text.as_bytes()) {
            Err(CorpusError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = "\n{\"command\": \"go\", \"level\": 1, \"reward\": \"goNorth\"}";
        assert!(matches!(read_corpus(text.as_bytes()), Err(CorpusError::Schema { line: 2, .. })));
        assert!(matches!(read_corpus("not json".as_bytes()), Err(CorpusError::Schema { line: 1, .. })));
        let text = "{\"command\": \"!!\", \"level\": 0, \"reward\": \"goNorth\"}";
        assert!(matches!(read_corpus(text.as_bytes()), Err(CorpusError::Schema { line: 1, .. })));
    }
}
