//! Persistent insight memory with add/edit/remove merge semantics.
//!
//! The merge model emits XML-ish operations (<add>, <edit number="n">,
//! <remove number="n">) against the numbered bank snapshot it was shown.
//! All numbers resolve against that snapshot; the bank renumbers once after
//! the whole batch. Parsing is total: malformed tags become diagnostics,
//! never errors.

use std::path::Path;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

/// Soft size cap; exceeding it asks the merge model to consolidate.
pub const SOFT_CAP: usize = 50;
/// Hard size cap; exceeding it evicts mechanically.
pub const HARD_CAP: usize = 100;
/// Default number of insights injected into a context.
pub const DEFAULT_SUBSET_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightKind {
    RuleClarification,
    LegalityConstraint,
    StrategyPrior,
    Other,
}

/// Crude keyword classifier; insights arrive as free text with no
/// explicit type marker.
pub fn classify(text: &str) -> InsightKind {
    let lower = text.to_lowercase();
    if lower.contains("illegal")
        || lower.contains("legal")
        || lower.contains("format")
        || lower.contains("valid")
    {
        InsightKind::LegalityConstraint
    } else if lower.contains("rule") || lower.contains("means") {
        InsightKind::RuleClarification
    } else if lower.contains("when") || lower.contains("prefer") || lower.contains("avoid") {
        InsightKind::StrategyPrior
    } else {
        InsightKind::Other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    /// 1-based display position, contiguous within a bank.
    pub index: usize,
    pub text: String,
    pub kind: InsightKind,
    pub source_generation: u32,
    pub revisions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MemoryOp {
    Add(String),
    Edit(usize, String),
    Remove(usize, String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedOps {
    pub ops: Vec<MemoryOp>,
    pub diagnostics: Vec<String>,
}

/// Extract all well-formed operations in document order.
pub fn parse_memory_ops(response: &str) -> ParsedOps {
    static TAG: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    static NUMBER: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let tag = TAG.get_or_init(|| {
        Regex::new(r"(?s)<(add|edit|remove)((?:\s[^>]*)?)>(.*?)</(add|edit|remove)>")
            .expect("static regex")
    });
    let number = NUMBER
        .get_or_init(|| Regex::new(r#"number\s*=\s*"([^"]*)""#).expect("static regex"));
    let mut out = ParsedOps::default();
    for cap in tag.captures_iter(response) {
        let open = &cap[1];
        let attrs = &cap[2];
        let body = cap[3].trim().to_string();
        let close = &cap[4];
        if open != close {
            out.diagnostics
                .push(format!("mismatched tags <{open}>...</{close}>"));
            continue;
        }
        if open == "add" {
            if body.is_empty() {
                out.diagnostics.push("empty <add> body".into());
            } else {
                out.ops.push(MemoryOp::Add(body));
            }
            continue;
        }
        let parsed = number
            .captures(attrs)
            .and_then(|c| c[1].parse::<usize>().ok());
        let Some(n) = parsed else {
            out.diagnostics
                .push(format!("<{open}> without a valid number attribute: {attrs:?}"));
            continue;
        };
        if open == "edit" {
            if body.is_empty() {
                out.diagnostics.push(format!("empty <edit number=\"{n}\"> body"));
            } else {
                out.ops.push(MemoryOp::Edit(n, body));
            }
        } else {
            out.ops.push(MemoryOp::Remove(n, body));
        }
    }
    if out.ops.is_empty() && out.diagnostics.is_empty() && !response.trim().is_empty() {
        out.diagnostics.push("no operations found".into());
    }
    out
}

/// Outcome of one merge batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    pub applied: usize,
    pub rejected: Vec<String>,
    /// Bank exceeds the soft cap: caller should re-issue the merge prompt
    /// asking for consolidation.
    pub needs_consolidation: bool,
    pub evicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBank {
    pub game_id: String,
    insights: Vec<Insight>,
}

impl MemoryBank {
    pub fn new(game_id: impl Into<String>) -> Self {
        MemoryBank {
            game_id: game_id.into(),
            insights: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.insights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insights.is_empty()
    }

    pub fn insights(&self) -> &[Insight] {
        &self.insights
    }

    /// Apply a parsed op batch against the current snapshot numbering.
    /// Edits and removes resolve against the indices the model saw;
    /// renumbering happens once at the end.
    pub fn apply_ops(&mut self, ops: &[MemoryOp], generation: u32) -> MergeReport {
        let mut report = MergeReport::default();
        let snapshot_len = self.insights.len();
        let mut removed = vec![false; snapshot_len];
        let mut edited: Vec<Option<String>> = vec![None; snapshot_len];
        let mut additions: Vec<String> = Vec::new();
        for op in ops {
            match op {
                MemoryOp::Add(text) => {
                    additions.push(text.clone());
                    report.applied += 1;
                }
                MemoryOp::Edit(n, text) => {
                    if *n >= 1 && *n <= snapshot_len {
                        edited[*n - 1] = Some(text.clone());
                        report.applied += 1;
                    } else {
                        report
                            .rejected
                            .push(format!("edit references missing insight {n}"));
                    }
                }
                MemoryOp::Remove(n, _reason) => {
                    if *n >= 1 && *n <= snapshot_len {
                        removed[*n - 1] = true;
                        report.applied += 1;
                    } else {
                        report
                            .rejected
                            .push(format!("remove references missing insight {n}"));
                    }
                }
            }
        }
        let mut next: Vec<Insight> = Vec::new();
        for (i, mut insight) in self.insights.drain(..).enumerate() {
            if removed[i] {
                continue;
            }
            if let Some(text) = edited[i].take() {
                insight.kind = classify(&text);
                insight.text = text;
                insight.revisions += 1;
            }
            next.push(insight);
        }
        for text in additions {
            next.push(Insight {
                index: 0,
                kind: classify(&text),
                text,
                source_generation: generation,
                revisions: 0,
            });
        }
        self.insights = next;
        self.renumber();
        report.needs_consolidation = self.insights.len() > SOFT_CAP;
        report.evicted = self.enforce_hard_cap();
        report
    }

    fn renumber(&mut self) {
        for (i, insight) in self.insights.iter_mut().enumerate() {
            insight.index = i + 1;
        }
    }

    /// Evict down to the hard cap: lowest revision count first, then the
    /// oldest source generation, then position.
    fn enforce_hard_cap(&mut self) -> usize {
        let mut evicted = 0;
        while self.insights.len() > HARD_CAP {
            let victim = self
                .insights
                .iter()
                .enumerate()
                .min_by_key(|(i, ins)| (ins.revisions, ins.source_generation, *i))
                .map(|(i, _)| i)
                .expect("non-empty over cap");
            self.insights.remove(victim);
            evicted += 1;
        }
        if evicted > 0 {
            self.renumber();
        }
        evicted
    }

    /// Uniform subset of min(k, len) insights without replacement, in
    /// original relative order.
    pub fn subsample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<Insight> {
        let n = self.insights.len();
        let k = k.min(n);
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            indices.swap(i, j);
        }
        let mut chosen = indices[..k].to_vec();
        chosen.sort_unstable();
        chosen.iter().map(|&i| self.insights[i].clone()).collect()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Deterministic text block: a header plus numbered insights, appended to
/// the game prompt at injection time. Empty input renders as empty.
pub fn render_memory(insights: &[Insight]) -> String {
    if insights.is_empty() {
        return String::new();
    }
    let mut out = String::from("MEMORY (insights from prior games):\n");
    for (i, insight) in insights.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, insight.text));
    }
    out
}

/// Recover the insight texts from a rendered block (round-trip check and
/// prompt assembly tests).
pub fn parse_rendered_memory(block: &str) -> Vec<String> {
    block
        .lines()
        .skip(1)
        .filter_map(|line| {
            let (num, rest) = line.split_once(". ")?;
            num.parse::<usize>().ok()?;
            Some(rest.to_string())
        })
        .collect()
}
