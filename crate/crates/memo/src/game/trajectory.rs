//! Trajectory records and JSONL persistence.
//!
//! A trajectory is the unaltered course of one game: the observation each
//! actor saw, the raw model response, what was extracted from it, and the
//! digest of the state after the step was applied.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Outcome, PlayerId};

/// One turn of play as it happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Observation shown to the actor before responding.
    pub observation: String,
    pub actor: PlayerId,
    pub raw_response: String,
    /// Extracted legal action token, if any.
    pub extracted: Option<String>,
    /// False when no legal action could be extracted (forfeiture).
    pub valid: bool,
    /// Digest of the full state after this step.
    pub state_digest: u64,
}

/// One complete game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub game_id: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// Payoff to Player 0: +1, 0, -1.
    pub outcome: i8,
    /// Number of steps played.
    pub horizon: usize,
}

impl Trajectory {
    pub fn new(game_id: impl Into<String>, seed: u64) -> Self {
        Trajectory {
            game_id: game_id.into(),
            seed,
            steps: Vec::new(),
            outcome: 0,
            horizon: 0,
        }
    }

    pub fn push(&mut self, step: StepRecord) {
        self.steps.push(step);
        self.horizon = self.steps.len();
    }

    pub fn finish(&mut self, outcome: Outcome) {
        self.outcome = outcome.0;
        self.horizon = self.steps.len();
    }

    /// Extracted action tokens of the valid steps, in order.
    pub fn actions(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.valid)
            .filter_map(|s| s.extracted.clone())
            .collect()
    }
}

/// A replayable prefix of a game: the seed plus the extracted actions that
/// reproduce an intermediate state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPrefix {
    pub game_id: String,
    pub seed: u64,
    pub actions: Vec<String>,
    /// Digest of the state the prefix reproduces, used as a check value.
    pub state_digest: u64,
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut file, item)?;
        file.write_all(b"\n")?;
    }
    file.flush()
}

pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> std::io::Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    serde_json::to_writer(&mut file, item)?;
    file.write_all(b"\n")
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new("kuhn_poker", 42);
        t.push(StepRecord {
            observation: "You hold the K.".into(),
            actor: PlayerId::P0,
            raw_response: "I bet. [bet]".into(),
            extracted: Some("[bet]".into()),
            valid: true,
            state_digest: 7,
        });
        t.push(StepRecord {
            observation: "Opponent bet.".into(),
            actor: PlayerId::P1,
            raw_response: "no thanks".into(),
            extracted: None,
            valid: false,
            state_digest: 9,
        });
        t.finish(Outcome::P0_WIN);
        t
    }

    #[test]
    fn jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.jsonl");
        let items = vec![sample(), sample()];
        write_jsonl(&path, &items).unwrap();
        let back: Vec<Trajectory> = read_jsonl(&path).unwrap();
        assert_eq!(back, items);
    }

    #[test]
    fn append_accumulates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.jsonl");
        append_jsonl(&path, &sample()).unwrap();
        append_jsonl(&path, &sample()).unwrap();
        let back: Vec<Trajectory> = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn actions_skip_invalid_steps() {
        let t = sample();
        assert_eq!(t.actions(), vec!["[bet]".to_string()]);
        assert_eq!(t.horizon, 2);
        assert_eq!(t.outcome, 1);
    }
}
