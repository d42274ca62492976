//! Command-line frontend for the context-optimization framework.
//!
//! Subcommands: run the optimization loop, evaluate a context against
//! held-out opponents, rebuild leaderboards from logged match results,
//! inspect replay and memory artifacts, and measure leaderboard stability
//! across prompt variants. Exit codes: 0 success, 1 usage/config error,
//! 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use memo::backend::HttpConfig;
use memo::evolve::{base_prompt, Context};
use memo::game::trajectory::read_jsonl;
use memo::game::{Outcome, PlayerId};
use memo::games::action_format_block;
use memo::memory::{render_memory, MemoryBank};
use memo::orchestrator::{
    evaluate, load_config, load_toml_with_overrides, play_game, run_memo, BackendSpec, EvalReport,
    Opponent, OrchestratorError,
};
use memo::rating::{
    kendall_tau_b, render_leaderboard, render_matrix, LeaderboardRow, MatchResult, RatingTable,
    TrueSkillConfig,
};
use memo::replay::ReplayBuffer;

#[derive(Parser)]
#[command(name = "memo", about = "Weight-free context optimization for two-player text games")]
struct Cli {
    /// Config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. --set replay.beta=0.2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent games where supported.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Resume an interrupted run from its checkpoint directory.
    #[arg(long, global = true)]
    resume: bool,
    /// Output directory for checkpoints and machine-readable reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full optimization loop and print the final context.
    Optimize,
    /// Evaluate a context against held-out opponents with RSE reporting.
    Evaluate {
        /// Context JSON file (defaults to the game's base context).
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Rebuild a leaderboard from a match-results JSONL file.
    Rank {
        results: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Summarize a replay buffer log: sizes, priorities, top prefixes.
    ReplayInspect {
        buffer: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
    },
    /// Print a memory bank's insights as they would be injected.
    MemoryInspect { bank: PathBuf },
    /// Round-robin each prompt variant and report pairwise rank stability.
    Sensitivity {
        /// Directory of prompt variant text files.
        variants: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn parse_overrides(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut overrides = Vec::new();
    for item in &cli.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        overrides.push((key.to_string(), value.to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(parallelism) = cli.parallelism {
        overrides.push(("parallelism".into(), parallelism.to_string()));
    }
    Ok(overrides)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("memo-out"))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join(name),
        serde_json::to_string_pretty(value)? + "\n",
    )?;
    Ok(())
}

fn pool_rows(pool: &[Context], kappa: f64) -> Vec<LeaderboardRow> {
    pool.iter()
        .map(|c| LeaderboardRow {
            id: c.id.clone(),
            mu: c.rating.mu,
            sigma: c.rating.sigma,
            lcb: c.score(kappa),
            games: c.games,
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = parse_overrides(&cli)?;
    match &cli.command {
        Command::Optimize => optimize(&cli, &overrides),
        Command::Evaluate { context } => run_evaluate(&cli, &overrides, context.as_deref()),
        Command::Rank { results, kappa } => rank(&cli, results, *kappa),
        Command::ReplayInspect { buffer, top, alpha } => replay_inspect(&cli, buffer, *top, *alpha),
        Command::MemoryInspect { bank } => memory_inspect(&cli, bank),
        Command::Sensitivity { variants } => sensitivity(&cli, &overrides, variants),
    }
}

fn optimize(cli: &Cli, overrides: &[(String, String)]) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref(), overrides)?;
    println!(
        "optimizing {} for {} generations, budget: {} games",
        config.game_id,
        config.generations,
        config.total_budget()
    );
    let dir = out_dir(cli);
    let summary = run_memo(&config, &dir, cli.resume).map_err(CliError::from)?;
    println!(
        "completed {} generations, {} games, checkpoint at {}",
        summary.generations_run,
        summary.completed_games,
        dir.display()
    );
    if summary.halted {
        println!("halted after generation checkpoint; rerun with --resume to continue");
        return Ok(());
    }
    let final_context = summary
        .final_context
        .as_ref()
        .expect("completed run has a final context");
    println!("\nfinal context: {}", final_context.id);
    println!("---\n{}\n---\n", final_context.prompt);
    println!("{}", render_leaderboard(&pool_rows(&summary.pool, config.kappa)));
    Ok(())
}

/// Held-out evaluation setup: the agent backend plus a list of opponents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalConfig {
    game_id: String,
    games_per_opponent: u32,
    runs: u32,
    seed: u64,
    retries: u32,
    parallelism: usize,
    agent: BackendSpec,
    opponent: Vec<OpponentSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            game_id: "kuhn_poker".into(),
            games_per_opponent: 50,
            runs: 3,
            seed: 0,
            retries: 0,
            parallelism: 1,
            agent: BackendSpec::default(),
            opponent: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OpponentSpec {
    id: String,
    kind: String,
    text: String,
    http: Option<HttpConfig>,
    /// Context prompt the opponent plays with; empty means the base prompt.
    prompt: String,
}

fn base_context(game_id: &str, id: &str) -> Result<Context, CliError> {
    let protected = action_format_block(game_id)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Context::base(
        id,
        base_prompt(protected),
        TrueSkillConfig::default().initial(),
    ))
}

fn run_evaluate(
    cli: &Cli,
    overrides: &[(String, String)],
    context_path: Option<&Path>,
) -> Result<(), CliError> {
    let config: EvalConfig = load_toml_with_overrides(cli.config.as_deref(), overrides)?;
    if config.opponent.is_empty() {
        return Err(CliError::Usage(
            "evaluate needs at least one [[opponent]] entry".into(),
        ));
    }
    let context = match context_path {
        Some(path) => serde_json::from_str::<Context>(
            &std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?,
        )
        .map_err(|e| CliError::Usage(format!("bad context file: {e}")))?,
        None => base_context(&config.game_id, "agent")?,
    };
    let agent = config.agent.build().map_err(CliError::from)?;
    let mut opponents = Vec::new();
    for (i, spec) in config.opponent.iter().enumerate() {
        let id = if spec.id.is_empty() {
            format!("opponent{i}")
        } else {
            spec.id.clone()
        };
        let backend = BackendSpec {
            kind: spec.kind.clone(),
            text: spec.text.clone(),
            http: spec.http.clone(),
        }
        .build()
        .map_err(CliError::from)?;
        let mut opp_context = base_context(&config.game_id, &id)?;
        if !spec.prompt.is_empty() {
            opp_context.prompt = spec.prompt.clone();
        }
        opponents.push(Opponent {
            id,
            context: opp_context,
            backend,
        });
    }
    let report: EvalReport = evaluate(
        &config.game_id,
        &context,
        &agent,
        &opponents,
        config.games_per_opponent,
        config.runs,
        config.seed,
        config.retries,
        config.parallelism,
    )
    .map_err(CliError::from)?;

    for (r, run) in report.runs.iter().enumerate() {
        println!("run {r}:");
        for opp in &run.opponents {
            println!("  vs {:<20} win rate {:.4} over {} games", opp.id, opp.win_rate, opp.games);
        }
        println!("  run mean {:.4}", run.mean);
    }
    println!("mean win rate: {:.4}", report.mean);
    match report.rse {
        Some(v) => println!("RSE: {:.4}%", v),
        None => println!("RSE: undefined (n < 2 runs)"),
    }
    write_json(&out_dir(cli), "eval_report.json", &report)?;
    Ok(())
}

fn rank(cli: &Cli, results: &Path, kappa: f64) -> Result<(), CliError> {
    let matches: Vec<MatchResult> = read_jsonl(results)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", results.display())))?;
    let mut table = RatingTable::new();
    let ts = TrueSkillConfig::default();
    for result in &matches {
        table
            .record(result, &ts)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let rows = table.leaderboard(kappa);
    println!("{}", render_leaderboard(&rows));
    write_json(&out_dir(cli), "leaderboard.json", &rows)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReplaySummary {
    entries: usize,
    top: Vec<ReplayTopEntry>,
}

#[derive(Debug, Serialize)]
struct ReplayTopEntry {
    digest: u64,
    count: u64,
    probability: f64,
    game_id: String,
    seed: u64,
    depth: usize,
}

fn replay_inspect(cli: &Cli, path: &Path, top: usize, alpha: f64) -> Result<(), CliError> {
    let buffer = ReplayBuffer::load(path, usize::MAX, alpha, 0.0)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut probabilities = buffer.probabilities();
    probabilities.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top_entries: Vec<ReplayTopEntry> = probabilities
        .iter()
        .take(top)
        .map(|(digest, p)| {
            let entry = buffer.get(*digest).expect("listed digest exists");
            ReplayTopEntry {
                digest: *digest,
                count: entry.count,
                probability: *p,
                game_id: entry.prefix.game_id.clone(),
                seed: entry.prefix.seed,
                depth: entry.prefix.actions.len(),
            }
        })
        .collect();
    println!("replay buffer: {} unique prefixes (alpha = {alpha})", buffer.len());
    println!("{:<22} {:<7} {:<12} {:<18} {:<12} depth", "digest", "count", "probability", "game", "seed");
    for e in &top_entries {
        println!(
            "{:<22} {:<7} {:<12.6} {:<18} {:<12} {}",
            e.digest, e.count, e.probability, e.game_id, e.seed, e.depth
        );
    }
    write_json(
        &out_dir(cli),
        "replay_summary.json",
        &ReplaySummary {
            entries: buffer.len(),
            top: top_entries,
        },
    )?;
    Ok(())
}

fn memory_inspect(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let bank = MemoryBank::load(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let rendered = render_memory(bank.insights());
    println!("memory bank: {} insights", bank.insights().len());
    if !rendered.is_empty() {
        println!("{rendered}");
    }
    write_json(&out_dir(cli), "memory_summary.json", &bank)?;
    Ok(())
}

/// Stability analysis setup: the agents that play every variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SensitivityConfig {
    game_id: String,
    games_per_pair: u32,
    seed: u64,
    retries: u32,
    kappa: f64,
    agent: Vec<NamedBackend>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            game_id: "kuhn_poker".into(),
            games_per_pair: 10,
            seed: 0,
            retries: 0,
            kappa: 1.0,
            agent: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NamedBackend {
    id: String,
    kind: String,
    text: String,
    http: Option<HttpConfig>,
}

#[derive(Debug, Serialize)]
struct SensitivityReport {
    variants: Vec<String>,
    leaderboards: Vec<Vec<LeaderboardRow>>,
    tau_matrix: Vec<Vec<f64>>,
}

fn sensitivity(
    cli: &Cli,
    overrides: &[(String, String)],
    variants_dir: &Path,
) -> Result<(), CliError> {
    let config: SensitivityConfig = load_toml_with_overrides(cli.config.as_deref(), overrides)?;
    if config.agent.len() < 2 {
        return Err(CliError::Usage(
            "sensitivity needs at least two [[agent]] entries".into(),
        ));
    }
    let mut variant_files: Vec<PathBuf> = std::fs::read_dir(variants_dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", variants_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    variant_files.sort();
    if variant_files.len() < 2 {
        return Err(CliError::Usage(
            "sensitivity needs at least two prompt variant files".into(),
        ));
    }

    let backends: Vec<_> = config
        .agent
        .iter()
        .map(|a| {
            BackendSpec {
                kind: a.kind.clone(),
                text: a.text.clone(),
                http: a.http.clone(),
            }
            .build()
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::from)?;
    let ts = TrueSkillConfig::default();

    let mut variant_names = Vec::new();
    let mut leaderboards = Vec::new();
    let mut score_vectors: Vec<Vec<f64>> = Vec::new();
    for (v, file) in variant_files.iter().enumerate() {
        let prompt = std::fs::read_to_string(file)?;
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("variant{v}"));
        let context = Context::base(name.clone(), prompt, ts.initial());
        let mut table = RatingTable::new();
        for i in 0..config.agent.len() {
            for j in i + 1..config.agent.len() {
                for g in 0..config.games_per_pair {
                    let seed = memo::game::rng::derive_seed(
                        config.seed,
                        &[v as u64, i as u64, j as u64, g as u64],
                    );
                    let seat = if g % 2 == 0 { PlayerId::P0 } else { PlayerId::P1 };
                    let backs = if seat == PlayerId::P0 {
                        [&backends[i], &backends[j]]
                    } else {
                        [&backends[j], &backends[i]]
                    };
                    let trajectory = play_game(
                        &config.game_id,
                        seed,
                        None,
                        [&context, &context],
                        backs,
                        config.retries,
                        |_| {},
                    )
                    .map_err(CliError::from)?;
                    let rel = Outcome(trajectory.outcome).for_player(seat);
                    table
                        .record(
                            &MatchResult {
                                context_a: config.agent[i].id.clone(),
                                context_b: config.agent[j].id.clone(),
                                outcome: rel,
                            },
                            &ts,
                        )
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
            }
        }
        let rows = table.leaderboard(config.kappa);
        println!("variant {name}:");
        println!("{}", render_leaderboard(&rows));
        // Scores indexed in the fixed agent order, for rank correlation.
        let scores: Vec<f64> = config
            .agent
            .iter()
            .map(|a| rows.iter().find(|r| r.id == a.id).map(|r| r.lcb).unwrap_or(0.0))
            .collect();
        score_vectors.push(scores);
        leaderboards.push(rows);
        variant_names.push(name);
    }

    let k = score_vectors.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            matrix[a][b] = kendall_tau_b(&score_vectors[a], &score_vectors[b])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    println!("pairwise Kendall tau-b over {k} variants:");
    println!("{}", render_matrix(&matrix));

    let dir = out_dir(cli);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("tau_matrix.txt"), render_matrix(&matrix) + "\n")?;
    write_json(
        &dir,
        "sensitivity.json",
        &SensitivityReport {
            variants: variant_names,
            leaderboards,
            tau_matrix: matrix,
        },
    )?;
    Ok(())
}
