//! Candidate context population management.
//!
//! Contexts are instruction prompts paired with an optional injected memory
//! block. New candidates come from style-guided random proposals or
//! memory-augmented edits of strong pool members; a persistent pool retains
//! the best contexts ever seen by lower-confidence-bound score. The
//! per-game action-format block is a protected region that every proposal
//! must preserve byte-identically.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatMessage, ModelBackend, ECHO_BEGIN, ECHO_END};
use crate::backend::{BASE_SYSTEM_PROMPT, OPTIMIZER_MAX_TOKENS};
use crate::memory::{render_memory, MemoryBank};
use crate::rating::{lcb_score, SkillRating, TrueSkillConfig};

/// Fixed playstyle catalog: core play patterns, tactical approaches,
/// game-specific strategies, cognitive styles, and behavioral patterns.
pub const STYLE_CATALOG: [&str; 45] = [
    "aggressive",
    "defensive",
    "analytical",
    "creative",
    "strategic",
    "adaptive",
    "balanced",
    "opportunistic",
    "conservative",
    "risk-taking",
    "methodical",
    "intuitive",
    "predictive",
    "reactive",
    "proactive",
    "experimental",
    "systematic",
    "positional",
    "territorial",
    "sacrificial",
    "blocking-focused",
    "center-control",
    "edge-control",
    "fork-creating",
    "trap-setting",
    "opening-focused",
    "endgame-focused",
    "minimax-oriented",
    "probabilistic",
    "rule-based",
    "principle-driven",
    "context-aware",
    "meta-gaming",
    "exploitative",
    "counter-play",
    "deceptive",
    "transparent",
    "unpredictable",
    "consistent",
    "alternating",
    "escalating",
    "de-escalating",
    "mirroring",
    "contrarian",
    "balancing",
];

pub fn sample_style<R: Rng + ?Sized>(rng: &mut R) -> &'static str {
    STYLE_CATALOG[rng.gen_range(0..STYLE_CATALOG.len())]
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("memory bank is empty; memory proposals need insights")]
    EmptyBank,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lineage {
    Base,
    Random { style: String },
    MemoryAugmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub id: String,
    /// Instruction prompt q.
    pub prompt: String,
    /// Rendered memory block injected for this tournament, possibly empty.
    pub injected_memory: String,
    pub rating: SkillRating,
    pub games: u32,
    pub lineage: Lineage,
    pub parent: Option<String>,
}

impl Context {
    pub fn base(id: impl Into<String>, prompt: impl Into<String>, prior: SkillRating) -> Self {
        Context {
            id: id.into(),
            prompt: prompt.into(),
            injected_memory: String::new(),
            rating: prior,
            games: 0,
            lineage: Lineage::Base,
            parent: None,
        }
    }

    pub fn score(&self, kappa: f64) -> f64 {
        lcb_score(self.rating, kappa)
    }
}

/// Default instruction prompt for a game: the protected action-format
/// block plus a short generic directive.
pub fn base_prompt(protected: &str) -> String {
    format!("{protected}\n\nPlay to win. Think briefly, then commit to exactly one action and end your response with it in the required bracketed format.")
}

/// Order contexts by score descending; ties by lower sigma, then id.
pub fn rank_contexts(contexts: &mut [Context], kappa: f64) {
    contexts.sort_by(|a, b| {
        b.score(kappa)
            .partial_cmp(&a.score(kappa))
            .unwrap()
            .then(a.rating.sigma.partial_cmp(&b.rating.sigma).unwrap())
            .then(a.id.cmp(&b.id))
    });
}

/// Persistent best-so-far pool, truncated to `max_size` by score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    contexts: Vec<Context>,
    max_size: usize,
    kappa: f64,
}

impl CandidatePool {
    pub fn new(max_size: usize, kappa: f64) -> Self {
        CandidatePool {
            contexts: Vec::new(),
            max_size,
            kappa,
        }
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn best_score(&self) -> Option<f64> {
        self.contexts.first().map(|c| c.score(self.kappa))
    }

    /// RetainTop(P ∪ C): merge by id (the incoming copy carries the newer
    /// rating), sort by score, truncate.
    pub fn retain_top(&mut self, generation: Vec<Context>) {
        for incoming in generation {
            match self.contexts.iter_mut().find(|c| c.id == incoming.id) {
                Some(existing) => *existing = incoming,
                None => self.contexts.push(incoming),
            }
        }
        rank_contexts(&mut self.contexts, self.kappa);
        self.contexts.truncate(self.max_size);
    }

    /// The returned final context: argmax score with deterministic ties.
    pub fn final_context(&self) -> Result<&Context, EvolveError> {
        self.contexts.first().ok_or(EvolveError::EmptyPool)
    }

    /// Rank-biased parent draw: the context at sorted rank r is chosen
    /// with weight 1/(r+1).
    pub fn sample_parent<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Context, EvolveError> {
        if self.contexts.is_empty() {
            return Err(EvolveError::EmptyPool);
        }
        let weights: Vec<f64> = (0..self.contexts.len())
            .map(|r| 1.0 / (r as f64 + 1.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u: f64 = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return Ok(&self.contexts[i]);
            }
        }
        Ok(self.contexts.last().unwrap())
    }
}

/// How many random vs memory proposals a generation requests.
pub fn proposal_split(n: usize, r_random: f64) -> (usize, usize) {
    let random = (n as f64 * r_random).floor() as usize;
    (random, n - random)
}

fn proposal_request(instruction: &str, current: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(BASE_SYSTEM_PROMPT),
        ChatMessage::user(format!(
            "{instruction}\n\n{ECHO_BEGIN}\n{current}\n{ECHO_END}\n\n\
             Return only the rewritten context text."
        )),
    ]
}

/// Validate, retry once, fall back. `fallback` must itself contain the
/// protected block.
fn propose_with_retry(
    backend: &ModelBackend,
    messages: &[ChatMessage],
    protected: &str,
    fallback: String,
) -> Result<String, BackendError> {
    for _ in 0..2 {
        let output = backend.complete(messages, OPTIMIZER_MAX_TOKENS)?;
        let trimmed = output.trim();
        if !trimmed.is_empty() && trimmed.contains(protected) {
            return Ok(trimmed.to_string());
        }
    }
    Ok(fallback)
}

/// Truncate to the length budget (in characters) without ever cutting the
/// protected block; if the budget cannot hold the edited text, the prompt
/// degrades to its protected core.
fn enforce_budget(prompt: String, protected: &str, budget: usize) -> String {
    if prompt.chars().count() <= budget {
        return prompt;
    }
    let cut: String = prompt.chars().take(budget).collect();
    if cut.contains(protected) {
        cut
    } else {
        protected.to_string()
    }
}

/// Style-guided random proposal derived from `base`.
pub fn random_proposal(
    backend: &ModelBackend,
    base: &Context,
    style: &str,
    protected: &str,
    length_budget: usize,
    id: impl Into<String>,
    ts: &TrueSkillConfig,
) -> Result<Context, EvolveError> {
    let preface = format!("Playstyle: {style}.");
    let instruction = format!(
        "Rewrite the game context below to instantiate a {style} playstyle. \
         Apply small, length-bounded edits (substitute phrases, insert or delete clauses, \
         reorder sentences). The action-format rules must remain byte-identical."
    );
    let messages = proposal_request(&instruction, &base.prompt);
    let edited = propose_with_retry(backend, &messages, protected, base.prompt.clone())?;
    let prompt = enforce_budget(format!("{preface}\n{edited}"), protected, length_budget);
    Ok(Context {
        id: id.into(),
        prompt,
        injected_memory: String::new(),
        rating: ts.initial(),
        games: 0,
        lineage: Lineage::Random {
            style: style.to_string(),
        },
        parent: Some(base.id.clone()),
    })
}

/// Memory-augmented proposal: weave a sampled insight subset into a
/// strong parent drawn from the pool.
pub fn memory_proposal<R: Rng + ?Sized>(
    backend: &ModelBackend,
    pool: &CandidatePool,
    bank: &MemoryBank,
    subset_size: usize,
    protected: &str,
    length_budget: usize,
    id: impl Into<String>,
    ts: &TrueSkillConfig,
    rng: &mut R,
) -> Result<Context, EvolveError> {
    if bank.is_empty() {
        return Err(EvolveError::EmptyBank);
    }
    let parent = pool.sample_parent(rng)?;
    let subset = bank.subsample(subset_size, rng);
    let insights_block = render_memory(&subset);
    let instruction = "Improve the game context below by weaving the listed insights into \
         its guidance. Keep it concise. The action-format rules must remain byte-identical."
        .to_string();
    let current = format!("{}\n\n{insights_block}", parent.prompt);
    let messages = proposal_request(&instruction, &current);
    let fallback = format!("{}\n\n{insights_block}", parent.prompt);
    let edited = propose_with_retry(backend, &messages, protected, fallback)?;
    let prompt = enforce_budget(edited, protected, length_budget);
    Ok(Context {
        id: id.into(),
        prompt,
        injected_memory: String::new(),
        rating: ts.initial(),
        games: 0,
        lineage: Lineage::MemoryAugmented,
        parent: Some(parent.id.clone()),
    })
}

/// TopN over pool survivors and fresh proposals: the next population.
pub fn form_next_population(
    pool: &CandidatePool,
    proposals: Vec<Context>,
    n: usize,
    kappa: f64,
) -> Vec<Context> {
    let mut candidates: Vec<Context> = pool.contexts().to_vec();
    for proposal in proposals {
        if !candidates.iter().any(|c| c.id == proposal.id) {
            candidates.push(proposal);
        }
    }
    rank_contexts(&mut candidates, kappa);
    candidates.truncate(n);
    for context in &mut candidates {
        context.injected_memory.clear();
        context.games = 0;
    }
    candidates
}

/// Inject a fresh memory subset into round(pi * N) uniformly chosen
/// contexts; the rest carry no memory. Returns how many slots were chosen
/// (the rendered block is still empty while the bank is).
pub fn inject_memory<R: Rng + ?Sized>(
    population: &mut [Context],
    bank: &MemoryBank,
    pi: f64,
    subset_size: usize,
    rng: &mut R,
) -> usize {
    let n = population.len();
    let count = ((pi * n as f64).round() as usize).min(n);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let chosen: std::collections::BTreeSet<usize> = indices[..count].iter().copied().collect();
    for (i, context) in population.iter_mut().enumerate() {
        if chosen.contains(&i) && !bank.is_empty() {
            context.injected_memory = render_memory(&bank.subsample(subset_size, rng));
        } else {
            context.injected_memory.clear();
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedPolicy;
    use crate::game::rng::stream_rng;
    use crate::memory::MemoryOp;

    const PROTECTED: &str = "Action Rules:\n- '[check]': Pass without betting";

    fn prior() -> SkillRating {
        TrueSkillConfig::default().initial()
    }

    fn echo_backend() -> ModelBackend {
        ModelBackend::scripted(ScriptedPolicy::PlantedOptimizer {
            insight: "unused".into(),
        })
    }

    fn rated(id: &str, mu: f64, sigma: f64) -> Context {
        let mut c = Context::base(id, base_prompt(PROTECTED), prior());
        c.rating = SkillRating { mu, sigma };
        c
    }

    #[test]
    fn base_prompt_contains_protected_block() {
        assert!(base_prompt(PROTECTED).contains(PROTECTED));
    }

    #[test]
    fn random_proposal_keeps_protected_region_and_adds_preface() {
        let ts = TrueSkillConfig::default();
        let base = Context::base("base", base_prompt(PROTECTED), ts.initial());
        let proposal = random_proposal(
            &echo_backend(),
            &base,
            "aggressive",
            PROTECTED,
            4000,
            "g1-r0",
            &ts,
        )
        .unwrap();
        assert!(proposal.prompt.starts_with("Playstyle: aggressive."));
        assert!(proposal.prompt.contains(PROTECTED));
        assert_eq!(
            proposal.lineage,
            Lineage::Random {
                style: "aggressive".into()
            }
        );
        assert_eq!(proposal.parent.as_deref(), Some("base"));
        assert_eq!(proposal.rating, ts.initial());
    }

    #[test]
    fn protected_violations_fall_back_to_base() {
        let ts = TrueSkillConfig::default();
        let base = Context::base("base", base_prompt(PROTECTED), ts.initial());
        let vandal = ModelBackend::scripted(ScriptedPolicy::Fixed("I deleted everything".into()));
        let proposal =
            random_proposal(&vandal, &base, "creative", PROTECTED, 4000, "g1-r1", &ts).unwrap();
        assert!(proposal.prompt.contains(PROTECTED));
        assert!(proposal.prompt.contains(&base.prompt));
    }

    #[test]
    fn budget_truncation_never_cuts_protected_text() {
        let long = format!("{}\n{}", base_prompt(PROTECTED), "padding ".repeat(500));
        let kept = enforce_budget(long.clone(), PROTECTED, 200);
        assert!(kept.contains(PROTECTED) || kept == PROTECTED);
        assert!(enforce_budget(long, PROTECTED, 10_000).len() > 200);
    }

    #[test]
    fn memory_proposal_contains_insight_content() {
        let ts = TrueSkillConfig::default();
        let mut pool = CandidatePool::new(16, 1.0);
        pool.retain_top(vec![Context::base("base", base_prompt(PROTECTED), ts.initial())]);
        let mut bank = MemoryBank::new("kuhn_poker");
        bank.apply_ops(&[MemoryOp::Add("Bet the K every time.".into())], 0);
        let mut rng = stream_rng(1, &[70]);
        let proposal = memory_proposal(
            &echo_backend(),
            &pool,
            &bank,
            10,
            PROTECTED,
            8000,
            "g1-m0",
            &ts,
            &mut rng,
        )
        .unwrap();
        assert!(proposal.prompt.contains("Bet the K every time."));
        assert!(proposal.prompt.contains(PROTECTED));
        assert_eq!(proposal.lineage, Lineage::MemoryAugmented);
    }

    #[test]
    fn memory_proposal_requires_non_empty_bank() {
        let ts = TrueSkillConfig::default();
        let mut pool = CandidatePool::new(16, 1.0);
        pool.retain_top(vec![Context::base("base", base_prompt(PROTECTED), ts.initial())]);
        let mut rng = stream_rng(1, &[71]);
        let result = memory_proposal(
            &echo_backend(),
            &pool,
            &MemoryBank::new("kuhn_poker"),
            10,
            PROTECTED,
            8000,
            "x",
            &ts,
            &mut rng,
        );
        assert!(matches!(result, Err(EvolveError::EmptyBank)));
    }

    #[test]
    fn parent_sampling_favors_top_scores() {
        let mut pool = CandidatePool::new(16, 1.0);
        pool.retain_top(vec![
            rated("top", 30.0, 1.0),
            rated("mid", 25.0, 1.0),
            rated("low", 20.0, 1.0),
        ]);
        let mut rng = stream_rng(2, &[72]);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..10_000 {
            let parent = pool.sample_parent(&mut rng).unwrap();
            *counts.entry(parent.id.clone()).or_insert(0u32) += 1;
        }
        // Weights 1, 1/2, 1/3 over total 11/6.
        let total = 10_000.0;
        assert!((counts["top"] as f64 / total - 6.0 / 11.0).abs() < 0.02);
        assert!(counts["top"] > counts["mid"]);
        assert!(counts["mid"] > counts["low"]);
    }

    #[test]
    fn proposal_split_matches_floor_arithmetic() {
        assert_eq!(proposal_split(8, 0.5), (4, 4));
        assert_eq!(proposal_split(8, 1.0), (8, 0));
        assert_eq!(proposal_split(8, 0.0), (0, 8));
        assert_eq!(proposal_split(7, 0.5), (3, 4));
    }

    #[test]
    fn retain_top_keeps_best_and_respects_capacity() {
        let mut pool = CandidatePool::new(4, 1.0);
        pool.retain_top((0..6).map(|i| rated(&format!("c{i}"), 20.0 + i as f64, 2.0)).collect());
        assert_eq!(pool.len(), 4);
        assert_eq!(pool.final_context().unwrap().id, "c5");
        let best = pool.best_score().unwrap();

        // Pool max score is non-decreasing under further retains.
        pool.retain_top(vec![rated("weak", 5.0, 2.0)]);
        assert!(pool.best_score().unwrap() >= best);

        // A re-rated incumbent replaces its old copy instead of duplicating.
        pool.retain_top(vec![rated("c5", 30.0, 1.0)]);
        assert_eq!(
            pool.contexts().iter().filter(|c| c.id == "c5").count(),
            1
        );
        assert!(pool.best_score().unwrap() > best);
    }

    #[test]
    fn final_context_breaks_ties_deterministically() {
        let mut pool = CandidatePool::new(8, 1.0);
        pool.retain_top(vec![rated("a", 30.0, 2.0), rated("b", 31.0, 4.0)]);
        // Scores: a = 28, b = 27.
        assert_eq!(pool.final_context().unwrap().id, "a");
    }

    #[test]
    fn next_population_prefers_rated_survivors_over_fresh_priors() {
        let mut pool = CandidatePool::new(16, 1.0);
        pool.retain_top(vec![rated("veteran", 30.0, 2.0)]);
        let proposals = (0..8)
            .map(|i| rated(&format!("fresh{i}"), 25.0, 25.0 / 3.0))
            .collect();
        let population = form_next_population(&pool, proposals, 8, 1.0);
        assert_eq!(population.len(), 8);
        assert_eq!(population[0].id, "veteran");
    }

    #[test]
    fn injection_hits_exactly_round_pi_n_contexts() {
        let mut bank = MemoryBank::new("kuhn_poker");
        bank.apply_ops(&[MemoryOp::Add("lesson".into())], 0);
        let mut rng = stream_rng(3, &[73]);
        for (pi, expected) in [(0.0, 0usize), (0.75, 6), (1.0, 8)] {
            let mut population: Vec<Context> =
                (0..8).map(|i| rated(&format!("c{i}"), 25.0, 8.0)).collect();
            inject_memory(&mut population, &bank, pi, 10, &mut rng);
            let injected = population
                .iter()
                .filter(|c| !c.injected_memory.is_empty())
                .count();
            assert_eq!(injected, expected, "pi={pi}");
        }
    }

    #[test]
    fn style_catalog_has_all_five_categories() {
        assert_eq!(STYLE_CATALOG.len(), 45);
        for s in ["aggressive", "opportunistic", "positional", "minimax-oriented", "balancing"] {
            assert!(STYLE_CATALOG.contains(&s));
        }
        let mut rng = stream_rng(4, &[74]);
        assert!(STYLE_CATALOG.contains(&sample_style(&mut rng)));
    }
}
