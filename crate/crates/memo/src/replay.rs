//! Prioritized replay buffer over trajectory prefixes.
//!
//! Each stored prefix carries an encounter count; its priority is 1/count,
//! and sampling draws entry i with probability priority_i^alpha normalized.
//! A gate probability beta decides whether a tournament game starts from a
//! replayed prefix at all. Rare prefixes are preserved: eviction removes
//! the most frequent entry first.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::digest::fnv1a64_fields;
use crate::game::TrajectoryPrefix;

/// Identity of a prefix: the digest of (game_id, seed, extracted actions).
/// Raw responses differing only in prose map to the same prefix.
pub fn prefix_digest(game_id: &str, seed: u64, actions: &[String]) -> u64 {
    let seed_bytes = seed.to_le_bytes();
    let mut fields: Vec<&[u8]> = vec![game_id.as_bytes(), &seed_bytes];
    for action in actions {
        fields.push(action.as_bytes());
    }
    fnv1a64_fields(fields)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prefix: TrajectoryPrefix,
    pub count: u64,
    pub inserted_at: u64,
}

impl ReplayEntry {
    pub fn priority(&self) -> f64 {
        1.0 / self.count as f64
    }
}

/// Persisted form of one buffer entry, one JSON object per line in the
/// append-only recovery log. The latest record for a digest wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub digest: u64,
    pub game_id: String,
    pub seed: u64,
    pub actions: Vec<String>,
    pub count: u64,
    pub seq: u64,
    pub state_digest: u64,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    entries: BTreeMap<u64, ReplayEntry>,
    capacity: usize,
    alpha: f64,
    beta: f64,
    next_seq: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64, beta: f64) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        assert!(alpha >= 0.0, "alpha must be non-negative");
        assert!((0.0..=1.0).contains(&beta), "beta must be a probability");
        ReplayBuffer {
            entries: BTreeMap::new(),
            capacity,
            alpha,
            beta,
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn get(&self, digest: u64) -> Option<&ReplayEntry> {
        self.entries.get(&digest)
    }

    /// Record an encounter of `prefix`: bump its count or store it fresh,
    /// evicting if over capacity. Returns the prefix digest.
    pub fn insert(&mut self, prefix: TrajectoryPrefix) -> u64 {
        let digest = prefix_digest(&prefix.game_id, prefix.seed, &prefix.actions);
        match self.entries.get_mut(&digest) {
            Some(entry) => entry.count += 1,
            None => {
                let entry = ReplayEntry {
                    prefix,
                    count: 1,
                    inserted_at: self.next_seq,
                };
                self.next_seq += 1;
                self.entries.insert(digest, entry);
                if self.entries.len() > self.capacity {
                    self.evict();
                }
            }
        }
        digest
    }

    /// Drop the most frequently seen entry, tie-broken by earliest insert.
    fn evict(&mut self) {
        let victim = self
            .entries
            .iter()
            .max_by_key(|(_, e)| (e.count, std::cmp::Reverse(e.inserted_at)))
            .map(|(&d, _)| d);
        if let Some(digest) = victim {
            self.entries.remove(&digest);
        }
    }

    /// Analytic sampling distribution: (digest, probability) pairs.
    pub fn probabilities(&self) -> Vec<(u64, f64)> {
        let weights: Vec<(u64, f64)> = self
            .entries
            .iter()
            .map(|(&d, e)| (d, e.priority().powf(self.alpha)))
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        weights.into_iter().map(|(d, w)| (d, w / total)).collect()
    }

    /// Draw one prefix with the alpha-tempered inverse-frequency law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&TrajectoryPrefix> {
        if self.entries.is_empty() {
            return None;
        }
        let probs = self.probabilities();
        let mut u: f64 = rng.gen();
        for (digest, p) in &probs {
            u -= p;
            if u <= 0.0 {
                return Some(&self.entries[digest].prefix);
            }
        }
        let last = probs.last().unwrap().0;
        Some(&self.entries[&last].prefix)
    }

    /// Gate: replay this game with probability beta, provided the buffer
    /// has anything to offer. The uniform draw is consumed either way so
    /// downstream randomness does not depend on buffer contents.
    pub fn should_replay<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let u: f64 = rng.gen();
        u < self.beta && !self.is_empty()
    }

    /// Append every entry's current record to the recovery log.
    pub fn append_log(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(
            std::fs::OpenOptions::new().create(true).append(true).open(path)?,
        );
        for (&digest, entry) in &self.entries {
            let record = ReplayRecord {
                digest,
                game_id: entry.prefix.game_id.clone(),
                seed: entry.prefix.seed,
                actions: entry.prefix.actions.clone(),
                count: entry.count,
                seq: entry.inserted_at,
                state_digest: entry.prefix.state_digest,
            };
            serde_json::to_writer(&mut file, &record)?;
            file.write_all(b"\n")?;
        }
        file.flush()
    }

    /// Rebuild a buffer from the append-only log; the last record per
    /// digest wins.
    pub fn load(path: &Path, capacity: usize, alpha: f64, beta: f64) -> std::io::Result<Self> {
        let mut buffer = ReplayBuffer::new(capacity, alpha, beta);
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut latest: BTreeMap<u64, ReplayRecord> = BTreeMap::new();
        for line in file.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord = serde_json::from_str(&line)?;
            latest.insert(record.digest, record);
        }
        for (digest, record) in latest {
            buffer.entries.insert(
                digest,
                ReplayEntry {
                    prefix: TrajectoryPrefix {
                        game_id: record.game_id,
                        seed: record.seed,
                        actions: record.actions,
                        state_digest: record.state_digest,
                    },
                    count: record.count,
                    inserted_at: record.seq,
                },
            );
            buffer.next_seq = buffer.next_seq.max(record.seq + 1);
        }
        while buffer.entries.len() > capacity {
            buffer.evict();
        }
        Ok(buffer)
    }
}
