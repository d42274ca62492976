//! The optimization main loop and evaluation protocol.
//!
//! Ties the pieces together: seeded games between context-conditioned
//! agents, replay-augmented tournaments against a frozen baseline,
//! reflection-driven memory merges, population re-formation, per-generation
//! checkpointing with resume, and the held-out evaluation protocol with
//! relative-standard-error reporting.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    assemble, memory_op_prompt, reflect, select_decisive_states, BackendError, ChatMessage,
    HttpConfig, ModelBackend, ScriptedPolicy, BASE_SYSTEM_PROMPT, GAME_MAX_TOKENS,
    OPTIMIZER_MAX_TOKENS,
};
use crate::evolve::{
    base_prompt, form_next_population, inject_memory, memory_proposal, proposal_split,
    random_proposal, sample_style, CandidatePool, Context, EvolveError,
};
use crate::game::action::extract_action;
use crate::game::digest::state_digest;
use crate::game::rng::{derive_seed, stream_rng, tags};
use crate::game::trajectory::{write_jsonl, StepRecord, TrajectoryPrefix};
use crate::game::{step, ActionRecord, GameError, Outcome, PlayerId, Trajectory};
use crate::games::{action_format_block, new_game};
use crate::memory::{parse_memory_ops, MemoryBank, MemoryOp};
use crate::rating::{rse, trueskill_update, MatchResult, RatingError, TrueSkillConfig};
use crate::replay::ReplayBuffer;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A model backend as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSpec {
    /// One of the scripted policy names (first_legal, last_legal, fixed,
    /// prefer, kuhn_obedient, kuhn_bettor, tag_conditional,
    /// planted_optimizer) or "http".
    pub kind: String,
    /// Policy parameter: the fixed text, preferred token, tag, or insight.
    pub text: String,
    pub http: Option<HttpConfig>,
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec {
            kind: "first_legal".into(),
            text: String::new(),
            http: None,
        }
    }
}

impl BackendSpec {
    pub fn build(&self) -> Result<ModelBackend, OrchestratorError> {
        let policy = match self.kind.as_str() {
            "first_legal" => ScriptedPolicy::FirstLegal,
            "last_legal" => ScriptedPolicy::LastLegal,
            "fixed" => ScriptedPolicy::Fixed(self.text.clone()),
            "prefer" => ScriptedPolicy::Prefer(self.text.clone()),
            "kuhn_obedient" => ScriptedPolicy::KuhnObedient,
            "kuhn_bettor" => ScriptedPolicy::KuhnBettor,
            "tag_conditional" => ScriptedPolicy::TagConditional {
                tag: self.text.clone(),
            },
            "planted_optimizer" => ScriptedPolicy::PlantedOptimizer {
                insight: self.text.clone(),
            },
            "http" => {
                let http = self.http.clone().ok_or_else(|| {
                    OrchestratorError::Config("backend kind \"http\" needs an [http] table".into())
                })?;
                return Ok(ModelBackend::Http(http));
            }
            other => {
                return Err(OrchestratorError::Config(format!(
                    "unknown backend kind: {other}"
                )))
            }
        };
        Ok(ModelBackend::Scripted(policy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            alpha: 0.6,
            beta: 0.4,
        }
    }
}

/// Full run configuration; every field is addressable from the CLI via
/// dotted `key=value` overrides and unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub game_id: String,
    /// Population size N.
    pub population: usize,
    /// Generations G.
    pub generations: u32,
    /// Games per candidate per generation S.
    pub games_per_candidate: u32,
    pub kappa: f64,
    /// Fraction of the population receiving injected memory.
    pub pi: f64,
    /// Fraction of new proposals that are random (vs memory-augmented).
    pub r_random: f64,
    /// Insight subset size sampled per injection.
    pub memory_subset: usize,
    /// Master seed; all randomness derives from it.
    pub seed: u64,
    /// Context length budget in characters.
    pub length_budget: usize,
    /// How many decisive states to reflect on per generation.
    pub decisive_top: usize,
    /// Extra model attempts after an unextractable response.
    pub retries: u32,
    /// Concurrent games during evaluation.
    pub parallelism: usize,
    /// Stop cleanly after checkpointing this generation.
    pub halt_after_generation: Option<u32>,
    /// Rate candidates against each other instead of the frozen baseline.
    pub league_mode: bool,
    /// Exclude drawn games from rating updates.
    pub skip_draws: bool,
    pub replay: ReplayConfig,
    pub trueskill: TrueSkillConfig,
    pub agent: BackendSpec,
    pub optimizer: BackendSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            game_id: "kuhn_poker".into(),
            population: 8,
            generations: 5,
            games_per_candidate: 50,
            kappa: 1.0,
            pi: 0.75,
            r_random: 0.5,
            memory_subset: 10,
            seed: 0,
            length_budget: 8000,
            decisive_top: 5,
            retries: 0,
            parallelism: 1,
            halt_after_generation: None,
            league_mode: false,
            skip_draws: false,
            replay: ReplayConfig::default(),
            trueskill: TrueSkillConfig::default(),
            agent: BackendSpec::default(),
            optimizer: BackendSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn total_budget(&self) -> u64 {
        self.population as u64 * self.generations as u64 * self.games_per_candidate as u64
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        action_format_block(&self.game_id)
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        let err = |msg: &str| Err(OrchestratorError::Config(msg.into()));
        if self.population < 2 {
            return err("population must be at least 2");
        }
        if self.games_per_candidate == 0 {
            return err("games_per_candidate must be positive");
        }
        if !(0.0..=1.0).contains(&self.pi) {
            return err("pi must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.r_random) {
            return err("r_random must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.replay.beta) {
            return err("replay.beta must lie in [0, 1]");
        }
        if self.replay.alpha < 0.0 {
            return err("replay.alpha must be non-negative");
        }
        if self.replay.capacity == 0 {
            return err("replay.capacity must be positive");
        }
        Ok(())
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), OrchestratorError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                OrchestratorError::Config(format!("override path {key} crosses a non-table value"))
            })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw));
    Ok(())
}

/// Load any TOML-backed config type from an optional file plus dotted
/// `key=value` overrides; overrides win over file values.
pub fn load_toml_with_overrides<T: serde::de::DeserializeOwned>(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<T, OrchestratorError> {
    let mut table: toml::Table = match path {
        Some(p) => std::fs::read_to_string(p)?
            .parse()
            .map_err(|e: toml::de::Error| OrchestratorError::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    for (key, raw) in overrides {
        set_path(&mut table, key, raw)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| OrchestratorError::Config(e.to_string()))
}

/// Load a run config and validate it.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, OrchestratorError> {
    let config: RunConfig = load_toml_with_overrides(path, overrides)?;
    config.validate()?;
    Ok(config)
}

/// Play one game to termination. When `prefix` is given the game resumes
/// from its reproduced state and the prefix steps open the trajectory.
/// Every non-terminal post-turn prefix is handed to `on_prefix`.
pub fn play_game(
    game_id: &str,
    seed: u64,
    prefix: Option<&TrajectoryPrefix>,
    contexts: [&Context; 2],
    backends: [&ModelBackend; 2],
    retries: u32,
    mut on_prefix: impl FnMut(TrajectoryPrefix),
) -> Result<Trajectory, OrchestratorError> {
    let (seed, mut state) = match prefix {
        Some(p) => (p.seed, new_game(&p.game_id, p.seed)?),
        None => (seed, new_game(game_id, seed)?),
    };
    let mut trajectory = Trajectory::new(state.game_id(), seed);

    if let Some(p) = prefix {
        for token in &p.actions {
            let actor = state.player_to_act();
            let observation = state.observe(actor);
            let record = ActionRecord::valid_move(actor, token.clone(), token.clone());
            step(state.as_mut(), &record)?;
            trajectory.push(StepRecord {
                observation,
                actor,
                raw_response: token.clone(),
                extracted: Some(token.clone()),
                valid: true,
                state_digest: state_digest(state.as_ref()),
            });
        }
        let reached = state_digest(state.as_ref());
        if reached != p.state_digest {
            return Err(GameError::DigestMismatch {
                expected: p.state_digest,
                actual: reached,
            }
            .into());
        }
    }

    while !state.is_terminal() {
        let actor = state.player_to_act();
        let context = contexts[actor.index()];
        let observation = state.observe(actor);
        let messages = assemble(
            BASE_SYSTEM_PROMPT,
            &context.prompt,
            &context.injected_memory,
            &observation,
        );
        let legal = state.legal_actions();
        let mut raw = String::new();
        let mut extracted = None;
        for _ in 0..=retries {
            raw = backends[actor.index()].complete(&messages, GAME_MAX_TOKENS)?;
            extracted = extract_action(&raw, &legal);
            if extracted.is_some() {
                break;
            }
        }
        let record = match &extracted {
            Some(token) => ActionRecord::valid_move(actor, raw.clone(), token.clone()),
            None => ActionRecord::invalid(actor, raw.clone()),
        };
        step(state.as_mut(), &record)?;
        trajectory.push(StepRecord {
            observation,
            actor,
            raw_response: raw,
            extracted,
            valid: record.valid,
            state_digest: state_digest(state.as_ref()),
        });
        if !state.is_terminal() {
            on_prefix(TrajectoryPrefix {
                game_id: trajectory.game_id.clone(),
                seed,
                actions: trajectory.actions(),
                state_digest: state_digest(state.as_ref()),
            });
        }
    }
    trajectory.finish(state.outcome().expect("terminal state has an outcome"));
    Ok(trajectory)
}

#[derive(Debug, Default)]
pub struct TournamentOutcome {
    pub trajectories: Vec<Trajectory>,
    pub results: Vec<MatchResult>,
    /// Games that resumed a stored prefix.
    pub replayed: u32,
    /// Games aborted by backend failures and requeued.
    pub aborted: u32,
}

const MAX_REQUEUES: u32 = 5;

/// Replay-augmented tournament: each candidate plays S games against the
/// frozen baseline (or, in league mode, a generation-start snapshot of the
/// other candidates), with roles swapped every other game. Candidate
/// ratings are updated in place; the baseline rating never moves.
pub fn run_tournament(
    population: &mut [Context],
    baseline: &Context,
    agent_backend: &ModelBackend,
    config: &RunConfig,
    buffer: &mut ReplayBuffer,
    generation: u32,
) -> Result<TournamentOutcome, OrchestratorError> {
    let mut out = TournamentOutcome::default();
    let snapshot: Vec<Context> = population.to_vec();
    let n = population.len();
    for (i, candidate) in population.iter_mut().enumerate() {
        for g in 0..config.games_per_candidate {
            let opponent: &Context = if config.league_mode {
                &snapshot[(i + 1 + g as usize % (n - 1)) % n]
            } else {
                baseline
            };
            let mut gate_rng = stream_rng(
                config.seed,
                &[tags::REPLAY_GATE, generation as u64, i as u64, g as u64],
            );
            let prefix = if generation >= 1 && buffer.should_replay(&mut gate_rng) {
                buffer.sample(&mut gate_rng).cloned()
            } else {
                None
            };
            let seat = if g % 2 == 0 { PlayerId::P0 } else { PlayerId::P1 };
            let pair = if seat == PlayerId::P0 {
                [&*candidate, opponent]
            } else {
                [opponent, &*candidate]
            };

            let mut trajectory = None;
            for attempt in 0..=MAX_REQUEUES {
                let seed = derive_seed(
                    config.seed,
                    &[
                        tags::GAME_SEED,
                        generation as u64,
                        i as u64,
                        g as u64,
                        attempt as u64,
                    ],
                );
                // A requeued game restarts fresh: the aborted attempt is
                // not policy signal.
                let use_prefix = if attempt == 0 { prefix.as_ref() } else { None };
                match play_game(
                    &config.game_id,
                    seed,
                    use_prefix,
                    pair,
                    [agent_backend, agent_backend],
                    config.retries,
                    |p| {
                        buffer.insert(p);
                    },
                ) {
                    Ok(t) => {
                        if attempt == 0 && use_prefix.is_some() {
                            out.replayed += 1;
                        }
                        trajectory = Some(t);
                        break;
                    }
                    Err(OrchestratorError::Backend(_)) => out.aborted += 1,
                    Err(e) => return Err(e),
                }
            }
            let trajectory = trajectory.ok_or_else(|| {
                OrchestratorError::Config("backend kept failing; run aborted".into())
            })?;

            let rel = Outcome(trajectory.outcome).for_player(seat);
            out.results.push(MatchResult {
                context_a: candidate.id.clone(),
                context_b: opponent.id.clone(),
                outcome: rel,
            });
            out.trajectories.push(trajectory);
            candidate.games += 1;
            if rel == 0 && config.skip_draws {
                continue;
            }
            let (a, b) = if rel >= 0 {
                (candidate.rating, opponent.rating)
            } else {
                (opponent.rating, candidate.rating)
            };
            let (wa, lb) = trueskill_update(a, b, rel == 0, &config.trueskill)?;
            candidate.rating = if rel >= 0 { wa } else { lb };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextReport {
    pub id: String,
    pub games: u32,
    pub wins: u32,
    pub losses: u32,
    pub draws: u32,
    pub mu: f64,
    pub sigma: f64,
    pub score: f64,
}

/// Everything needed to audit one generation and recompute its selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u32,
    pub contexts: Vec<ContextReport>,
    /// Population slots chosen for memory injection.
    pub injected_contexts: usize,
    pub insights_added: usize,
    pub insights_edited: usize,
    pub insights_removed: usize,
    pub replay_fraction: f64,
    pub trajectories_logged: usize,
    pub completed_games: u32,
    pub results: Vec<MatchResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunState {
    next_generation: u32,
    population: Vec<Context>,
    pool: CandidatePool,
    base: Context,
}

pub struct Checkpoint {
    pub dir: PathBuf,
}

impl Checkpoint {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("generations"))?;
        std::fs::create_dir_all(dir.join("trajectories"))?;
        Ok(Checkpoint { dir })
    }

    pub fn state_path(&self) -> PathBuf {
        self.dir.join("state.json")
    }

    pub fn bank_path(&self) -> PathBuf {
        self.dir.join("memory_bank.json")
    }

    pub fn buffer_path(&self) -> PathBuf {
        self.dir.join("replay_buffer.jsonl")
    }

    pub fn generation_path(&self, generation: u32) -> PathBuf {
        self.dir.join(format!("generations/gen_{generation:03}.json"))
    }

    pub fn trajectories_path(&self, generation: u32) -> PathBuf {
        self.dir
            .join(format!("trajectories/gen_{generation:03}.jsonl"))
    }

    pub fn final_context_path(&self) -> PathBuf {
        self.dir.join("final_context.json")
    }
}

#[derive(Debug)]
pub struct RunSummary {
    /// Best pool context; absent when the run halted early.
    pub final_context: Option<Context>,
    pub halted: bool,
    pub generations_run: u32,
    pub completed_games: u64,
    pub reports: Vec<GenerationReport>,
    /// Pool contents at the end of the run, best first.
    pub pool: Vec<Context>,
}

fn count_ops(ops: &[MemoryOp]) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for op in ops {
        match op {
            MemoryOp::Add(_) => counts.0 += 1,
            MemoryOp::Edit(..) => counts.1 += 1,
            MemoryOp::Remove(..) => counts.2 += 1,
        }
    }
    counts
}

/// The full optimization loop with per-generation checkpointing. With
/// `resume`, picks up from the last saved generation boundary.
pub fn run_memo(
    config: &RunConfig,
    out_dir: &Path,
    resume: bool,
) -> Result<RunSummary, OrchestratorError> {
    config.validate()?;
    let checkpoint = Checkpoint::new(out_dir)?;
    std::fs::write(
        checkpoint.dir.join("config.toml"),
        toml::to_string_pretty(config).map_err(|e| OrchestratorError::Config(e.to_string()))?,
    )?;

    let agent = config.agent.build()?;
    let optimizer = config.optimizer.build()?;
    let protected = action_format_block(&config.game_id)?;
    let ts = &config.trueskill;
    let n = config.population;

    let (start_gen, mut population, mut pool, base, mut bank, mut buffer) =
        if resume && checkpoint.state_path().exists() {
            let state: RunState =
                serde_json::from_str(&std::fs::read_to_string(checkpoint.state_path())?)?;
            let bank = if checkpoint.bank_path().exists() {
                MemoryBank::load(&checkpoint.bank_path())?
            } else {
                MemoryBank::new(&config.game_id)
            };
            let buffer = if checkpoint.buffer_path().exists() {
                ReplayBuffer::load(
                    &checkpoint.buffer_path(),
                    config.replay.capacity,
                    config.replay.alpha,
                    config.replay.beta,
                )?
            } else {
                ReplayBuffer::new(config.replay.capacity, config.replay.alpha, config.replay.beta)
            };
            (
                state.next_generation,
                state.population,
                state.pool,
                state.base,
                bank,
                buffer,
            )
        } else {
            let base = Context::base("base", base_prompt(protected), ts.initial());
            let mut population = vec![base.clone()];
            let mut rng = stream_rng(config.seed, &[tags::PROPOSAL, u64::MAX]);
            for j in 0..n - 1 {
                let style = sample_style(&mut rng);
                population.push(random_proposal(
                    &optimizer,
                    &base,
                    style,
                    protected,
                    config.length_budget,
                    format!("g0-r{j}"),
                    ts,
                )?);
            }
            let pool = CandidatePool::new(2 * n, config.kappa);
            (
                0,
                population,
                pool,
                base,
                MemoryBank::new(&config.game_id),
                ReplayBuffer::new(config.replay.capacity, config.replay.alpha, config.replay.beta),
            )
        };

    let mut summary = RunSummary {
        final_context: None,
        halted: false,
        generations_run: start_gen,
        completed_games: 0,
        reports: Vec::new(),
        pool: Vec::new(),
    };

    for generation in start_gen..config.generations {
        let mut inj_rng = stream_rng(config.seed, &[tags::INJECTION, generation as u64]);
        let injected = inject_memory(
            &mut population,
            &bank,
            config.pi,
            config.memory_subset,
            &mut inj_rng,
        );

        let outcome = run_tournament(
            &mut population,
            &base,
            &agent,
            config,
            &mut buffer,
            generation,
        )?;

        pool.retain_top(population.clone());

        let decisive = select_decisive_states(&outcome.trajectories, config.decisive_top);
        let mut insights = Vec::new();
        for state in &decisive {
            if let Some(text) = reflect(&optimizer, state)? {
                insights.push(text);
            }
        }
        let (mut added, mut edited, mut removed) = (0, 0, 0);
        if !insights.is_empty() {
            let messages = vec![
                ChatMessage::system(BASE_SYSTEM_PROMPT),
                ChatMessage::user(memory_op_prompt(&insights, &bank)),
            ];
            let response = optimizer.complete(&messages, OPTIMIZER_MAX_TOKENS)?;
            let parsed = parse_memory_ops(&response);
            (added, edited, removed) = count_ops(&parsed.ops);
            bank.apply_ops(&parsed.ops, generation);
        }

        let contexts = population
            .iter()
            .map(|c| {
                let (wins, losses, draws) = outcome
                    .results
                    .iter()
                    .filter(|r| r.context_a == c.id)
                    .fold((0, 0, 0), |(w, l, d), r| match r.outcome {
                        1 => (w + 1, l, d),
                        -1 => (w, l + 1, d),
                        _ => (w, l, d + 1),
                    });
                ContextReport {
                    id: c.id.clone(),
                    games: c.games,
                    wins,
                    losses,
                    draws,
                    mu: c.rating.mu,
                    sigma: c.rating.sigma,
                    score: c.score(config.kappa),
                }
            })
            .collect();
        let completed = outcome.results.len() as u32;
        let report = GenerationReport {
            generation,
            contexts,
            injected_contexts: injected,
            insights_added: added,
            insights_edited: edited,
            insights_removed: removed,
            replay_fraction: outcome.replayed as f64 / completed.max(1) as f64,
            trajectories_logged: outcome.trajectories.len(),
            completed_games: completed,
            results: outcome.results,
        };
        summary.completed_games += completed as u64;
        summary.generations_run = generation + 1;

        write_jsonl(
            &checkpoint.trajectories_path(generation),
            &outcome.trajectories,
        )?;
        std::fs::write(
            checkpoint.generation_path(generation),
            serde_json::to_string_pretty(&report)? + "\n",
        )?;
        bank.save(&checkpoint.bank_path())?;
        buffer.append_log(&checkpoint.buffer_path())?;
        summary.reports.push(report);

        if generation + 1 < config.generations {
            let mut prop_rng = stream_rng(config.seed, &[tags::PROPOSAL, generation as u64]);
            let (n_random, n_memory) = proposal_split(n, config.r_random);
            let mut proposals = Vec::new();
            for j in 0..n_random {
                let style = sample_style(&mut prop_rng);
                proposals.push(random_proposal(
                    &optimizer,
                    &base,
                    style,
                    protected,
                    config.length_budget,
                    format!("g{}-r{j}", generation + 1),
                    ts,
                )?);
            }
            for j in 0..n_memory {
                let id = format!("g{}-m{j}", generation + 1);
                if bank.is_empty() {
                    // No insights yet: fall back to a random proposal.
                    let style = sample_style(&mut prop_rng);
                    proposals.push(random_proposal(
                        &optimizer,
                        &base,
                        style,
                        protected,
                        config.length_budget,
                        id,
                        ts,
                    )?);
                } else {
                    proposals.push(memory_proposal(
                        &optimizer,
                        &pool,
                        &bank,
                        config.memory_subset,
                        protected,
                        config.length_budget,
                        id,
                        ts,
                        &mut prop_rng,
                    )?);
                }
            }
            population = form_next_population(&pool, proposals, n, config.kappa);
        }

        let state = RunState {
            next_generation: generation + 1,
            population: population.clone(),
            pool: pool.clone(),
            base: base.clone(),
        };
        std::fs::write(
            checkpoint.state_path(),
            serde_json::to_string_pretty(&state)? + "\n",
        )?;

        if config.halt_after_generation == Some(generation) && generation + 1 < config.generations
        {
            summary.halted = true;
            summary.pool = pool.contexts().to_vec();
            return Ok(summary);
        }
    }

    let final_context = pool.final_context()?.clone();
    std::fs::write(
        checkpoint.final_context_path(),
        serde_json::to_string_pretty(&final_context)? + "\n",
    )?;
    summary.final_context = Some(final_context);
    summary.pool = pool.contexts().to_vec();
    Ok(summary)
}

/// One evaluation opponent: a label, the context it plays with, and its
/// backend.
pub struct Opponent {
    pub id: String,
    pub context: Context,
    pub backend: ModelBackend,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpponentReport {
    pub id: String,
    pub games: u32,
    /// Wins plus half-credit for draws, over games.
    pub win_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEval {
    pub opponents: Vec<OpponentReport>,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunEval>,
    pub mean: f64,
    /// Relative standard error over run means; undefined for n < 2.
    pub rse: Option<f64>,
}

/// Held-out evaluation: `games_per_opponent` role-swapped games against
/// each opponent per run, repeated over `runs` independent seed streams.
/// Games run on up to `parallelism` threads; results are merged in a fixed
/// order so the report is identical at any thread count.
pub fn evaluate(
    game_id: &str,
    context: &Context,
    agent_backend: &ModelBackend,
    opponents: &[Opponent],
    games_per_opponent: u32,
    runs: u32,
    seed: u64,
    retries: u32,
    parallelism: usize,
) -> Result<EvalReport, OrchestratorError> {
    let jobs: Vec<(u32, usize, u32)> = (0..runs)
        .flat_map(|r| {
            opponents
                .iter()
                .enumerate()
                .flat_map(move |(o, _)| (0..games_per_opponent).map(move |g| (r, o, g)))
        })
        .collect();
    let mut rels: Vec<Result<i8, OrchestratorError>> = Vec::with_capacity(jobs.len());
    rels.resize_with(jobs.len(), || Ok(0));

    let workers = parallelism.max(1);
    let chunk = jobs.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        for (job_chunk, out_chunk) in jobs.chunks(chunk).zip(rels.chunks_mut(chunk)) {
            scope.spawn(move || {
                for ((r, o, g), out) in job_chunk.iter().zip(out_chunk.iter_mut()) {
                    let opponent = &opponents[*o];
                    let game_seed = derive_seed(
                        seed,
                        &[tags::EVALUATION, *r as u64, *o as u64, *g as u64],
                    );
                    let seat = if g % 2 == 0 { PlayerId::P0 } else { PlayerId::P1 };
                    let (pair, backs) = if seat == PlayerId::P0 {
                        ([context, &opponent.context], [agent_backend, &opponent.backend])
                    } else {
                        ([&opponent.context, context], [&opponent.backend, agent_backend])
                    };
                    *out = play_game(game_id, game_seed, None, pair, backs, retries, |_| {})
                        .map(|t| Outcome(t.outcome).for_player(seat));
                }
            });
        }
    });

    let mut run_evals = Vec::new();
    for r in 0..runs {
        let mut opponent_reports = Vec::new();
        let mut total_points = 0.0;
        let mut total_games = 0u32;
        for (o, opponent) in opponents.iter().enumerate() {
            let mut points = 0.0;
            for (idx, job) in jobs.iter().enumerate() {
                if job.0 == r && job.1 == o {
                    match std::mem::replace(&mut rels[idx], Ok(0)) {
                        Ok(1) => points += 1.0,
                        Ok(0) => points += 0.5,
                        Ok(_) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            total_points += points;
            total_games += games_per_opponent;
            opponent_reports.push(OpponentReport {
                id: opponent.id.clone(),
                games: games_per_opponent,
                win_rate: points / games_per_opponent as f64,
            });
        }
        run_evals.push(RunEval {
            opponents: opponent_reports,
            mean: total_points / total_games.max(1) as f64,
        });
    }
    let means: Vec<f64> = run_evals.iter().map(|r| r.mean).collect();
    let mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
    let rse_value = if means.len() >= 2 {
        rse(&means).ok()
    } else {
        None
    };
    Ok(EvalReport {
        runs: run_evals,
        mean,
        rse: rse_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(policy: ScriptedPolicy) -> ModelBackend {
        ModelBackend::Scripted(policy)
    }

    fn plain(id: &str) -> Context {
        let ts = TrueSkillConfig::default();
        Context::base(
            id,
            base_prompt(action_format_block("kuhn_poker").unwrap()),
            ts.initial(),
        )
    }

    #[test]
    fn config_defaults_hit_the_standard_budget() {
        let config = RunConfig::default();
        assert_eq!(config.total_budget(), 2000);
        assert_eq!((config.population, config.generations), (8, 5));
        assert_eq!(config.games_per_candidate, 50);
        assert_eq!(
            (config.kappa, config.pi, config.replay.alpha, config.replay.beta),
            (1.0, 0.75, 0.6, 0.4)
        );
        assert_eq!(config.replay.capacity, 100_000);
        config.validate().unwrap();
    }

    #[test]
    fn overrides_beat_file_values_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "population = 4\ngame_id = \"briscola\"\n").unwrap();
        let config = load_config(
            Some(&path),
            &[
                ("population".into(), "6".into()),
                ("replay.beta".into(), "0.2".into()),
                ("agent.kind".into(), "kuhn_bettor".into()),
            ],
        )
        .unwrap();
        assert_eq!(config.population, 6);
        assert_eq!(config.game_id, "briscola");
        assert_eq!(config.replay.beta, 0.2);
        assert_eq!(config.agent.kind, "kuhn_bettor");

        let err = load_config(None, &[("no_such_field".into(), "1".into())]);
        assert!(matches!(err, Err(OrchestratorError::Config(_))));

        let invalid = load_config(None, &[("pi".into(), "1.5".into())]);
        assert!(matches!(invalid, Err(OrchestratorError::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string_pretty(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.toml");
        std::fs::write(&path, &text).unwrap();
        let back = load_config(Some(&path), &[]).unwrap();
        assert_eq!(toml::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn scripted_games_are_deterministic() {
        let a = plain("a");
        let b = plain("b");
        let first = scripted(ScriptedPolicy::FirstLegal);
        let last = scripted(ScriptedPolicy::LastLegal);
        let reference = play_game(
            "kuhn_poker",
            7,
            None,
            [&a, &b],
            [&first, &last],
            0,
            |_| {},
        )
        .unwrap();
        for _ in 0..10 {
            let again = play_game(
                "kuhn_poker",
                7,
                None,
                [&a, &b],
                [&first, &last],
                0,
                |_| {},
            )
            .unwrap();
            assert_eq!(again, reference);
        }
    }

    #[test]
    fn prefix_games_start_with_the_prefix_records() {
        let a = plain("a");
        let b = plain("b");
        let first = scripted(ScriptedPolicy::FirstLegal);
        let full = play_game(
            "kuhn_poker",
            11,
            None,
            [&a, &b],
            [&first, &first],
            0,
            |_| {},
        )
        .unwrap();
        assert!(full.steps.len() > 3);
        let prefix = TrajectoryPrefix {
            game_id: "kuhn_poker".into(),
            seed: 11,
            actions: full.actions()[..3].to_vec(),
            state_digest: full.steps[2].state_digest,
        };
        let resumed = play_game(
            "kuhn_poker",
            0,
            Some(&prefix),
            [&a, &b],
            [&first, &first],
            0,
            |_| {},
        )
        .unwrap();
        for k in 0..3 {
            assert_eq!(resumed.steps[k].extracted, full.steps[k].extracted);
            assert_eq!(resumed.steps[k].state_digest, full.steps[k].state_digest);
        }
        assert_eq!(resumed, full);

        let broken = TrajectoryPrefix {
            state_digest: 1,
            ..prefix
        };
        let err = play_game(
            "kuhn_poker",
            0,
            Some(&broken),
            [&a, &b],
            [&first, &first],
            0,
            |_| {},
        );
        assert!(err.is_err());
    }

    #[test]
    fn garbage_response_forfeits_immediately() {
        let a = plain("a");
        let b = plain("b");
        let garbage = scripted(ScriptedPolicy::Fixed("I refuse to play".into()));
        let first = scripted(ScriptedPolicy::FirstLegal);
        let t = play_game(
            "kuhn_poker",
            3,
            None,
            [&a, &b],
            [&garbage, &first],
            0,
            |_| {},
        )
        .unwrap();
        assert_eq!(t.steps.len(), 1);
        assert!(!t.steps[0].valid);
        assert_eq!(t.outcome, -1);
    }

    #[test]
    fn tournament_counts_games_and_orders_by_strength() {
        // KuhnBettor dominates the check/fold FirstLegal baseline, so a
        // candidate whose prompt carries the maniac tag far outrates one
        // without it.
        let config = {
            let mut c = RunConfig::default();
            c.population = 2;
            c.games_per_candidate = 20;
            c.agent = BackendSpec {
                kind: "tag_conditional".into(),
                text: "MANIAC".into(),
                http: None,
            };
            c
        };
        let agent = config.agent.build().unwrap();
        let mut strong = plain("strong");
        strong.prompt.push_str("\nMANIAC");
        let weak = plain("weak");
        let baseline = plain("base");
        let mut population = vec![strong, weak];
        let mut buffer = ReplayBuffer::new(1000, 0.6, 0.4);
        let out = run_tournament(&mut population, &baseline, &agent, &config, &mut buffer, 0)
            .unwrap();
        assert_eq!(out.results.len(), 40);
        assert_eq!(out.trajectories.len(), 40);
        assert_eq!(out.replayed, 0);
        assert!(population[0].rating.mu > population[1].rating.mu);
        assert!(
            population[0].score(1.0) > population[1].score(1.0),
            "all-winning candidate must outscore the losing one"
        );
        assert_eq!(baseline.rating, TrueSkillConfig::default().initial());
        assert!(!buffer.is_empty());

        // From generation 1 the buffer is consulted and some games replay.
        let out1 = run_tournament(&mut population, &baseline, &agent, &config, &mut buffer, 1)
            .unwrap();
        assert!(out1.replayed > 0);
    }

    #[test]
    fn role_swap_is_balanced() {
        let config = {
            let mut c = RunConfig::default();
            c.population = 2;
            c.games_per_candidate = 9;
            c
        };
        let agent = config.agent.build().unwrap();
        let mut population = vec![plain("a"), plain("b")];
        let baseline = plain("base");
        let mut buffer = ReplayBuffer::new(1000, 0.6, 0.4);
        let out = run_tournament(&mut population, &baseline, &agent, &config, &mut buffer, 0)
            .unwrap();
        // 9 games per candidate: 5 as first mover, 4 as second.
        for id in ["a", "b"] {
            let firsts = out
                .trajectories
                .iter()
                .zip(&out.results)
                .filter(|(_, r)| r.context_a == id)
                .enumerate()
                .filter(|(k, _)| k % 2 == 0)
                .count();
            assert_eq!(firsts, 5);
        }
    }

    #[test]
    fn tiny_run_completes_with_exact_budget() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::default();
        config.population = 2;
        config.generations = 2;
        config.games_per_candidate = 4;
        config.optimizer = BackendSpec {
            kind: "planted_optimizer".into(),
            text: "Check when unsure.".into(),
            http: None,
        };
        let summary = run_memo(&config, dir.path(), false).unwrap();
        assert_eq!(summary.completed_games, 16);
        assert!(!summary.halted);
        assert!(summary.final_context.is_some());
        assert!(dir.path().join("state.json").exists());
        assert!(dir.path().join("config.toml").exists());
        assert!(dir.path().join("memory_bank.json").exists());
        assert!(dir.path().join("replay_buffer.jsonl").exists());
        assert!(dir.path().join("generations/gen_001.json").exists());
        assert!(dir.path().join("trajectories/gen_001.jsonl").exists());
        assert!(dir.path().join("final_context.json").exists());

        // Generation 0 lineages are base or random only.
        let report: GenerationReport = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("generations/gen_000.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report.completed_games, 8);
        assert_eq!(report.replay_fraction, 0.0);
        for c in &report.contexts {
            assert!(c.id == "base" || c.id.starts_with("g0-r"));
        }
    }

    #[test]
    fn halt_and_resume_reproduce_the_straight_run() {
        let mut config = RunConfig::default();
        config.population = 2;
        config.generations = 3;
        config.games_per_candidate = 4;
        config.optimizer = BackendSpec {
            kind: "planted_optimizer".into(),
            text: "Bet with strong cards.".into(),
            http: None,
        };

        let straight_dir = tempfile::tempdir().unwrap();
        let straight = run_memo(&config, straight_dir.path(), false).unwrap();

        let split_dir = tempfile::tempdir().unwrap();
        let mut halted_config = config.clone();
        halted_config.halt_after_generation = Some(1);
        let halted = run_memo(&halted_config, split_dir.path(), false).unwrap();
        assert!(halted.halted);
        assert!(halted.final_context.is_none());
        let resumed = run_memo(&config, split_dir.path(), true).unwrap();

        assert_eq!(
            resumed.final_context.as_ref().unwrap(),
            straight.final_context.as_ref().unwrap()
        );
        for name in ["state.json", "memory_bank.json", "final_context.json"] {
            assert_eq!(
                std::fs::read_to_string(straight_dir.path().join(name)).unwrap(),
                std::fs::read_to_string(split_dir.path().join(name)).unwrap(),
                "{name} differs after resume"
            );
        }
    }

    #[test]
    fn evaluation_counts_and_parallelism_invariance() {
        let context = plain("hero");
        let agent = scripted(ScriptedPolicy::KuhnBettor);
        let opponents: Vec<Opponent> = (0..3)
            .map(|i| Opponent {
                id: format!("opp{i}"),
                context: plain(&format!("opp{i}")),
                backend: scripted(ScriptedPolicy::FirstLegal),
            })
            .collect();
        let report = evaluate("kuhn_poker", &context, &agent, &opponents, 50, 1, 9, 0, 1)
            .unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.runs[0].opponents.len(), 3);
        assert_eq!(
            report.runs[0].opponents.iter().map(|o| o.games).sum::<u32>(),
            150
        );
        assert!(report.rse.is_none(), "single run has no RSE");
        // Always-betting beats always-check/fold decisively.
        assert!(report.mean > 0.9);

        let parallel = evaluate("kuhn_poker", &context, &agent, &opponents, 50, 1, 9, 0, 4)
            .unwrap();
        assert_eq!(
            serde_json::to_string(&parallel).unwrap(),
            serde_json::to_string(&report).unwrap()
        );

        let multi = evaluate("kuhn_poker", &context, &agent, &opponents, 10, 3, 9, 0, 2)
            .unwrap();
        assert_eq!(multi.runs.len(), 3);
        assert!(multi.rse.is_some());
    }

    #[test]
    fn backend_spec_builds_every_kind() {
        for kind in [
            "first_legal",
            "last_legal",
            "fixed",
            "prefer",
            "kuhn_obedient",
            "kuhn_bettor",
            "tag_conditional",
            "planted_optimizer",
        ] {
            BackendSpec {
                kind: kind.into(),
                text: "x".into(),
                http: None,
            }
            .build()
            .unwrap();
        }
        assert!(BackendSpec {
            kind: "http".into(),
            text: String::new(),
            http: None,
        }
        .build()
        .is_err());
        assert!(BackendSpec {
            kind: "bogus".into(),
            text: String::new(),
            http: None,
        }
        .build()
        .is_err());
    }
}
