//! Model backends, prompt assembly, and trajectory reflection.
//!
//! A backend is either a generic HTTP chat-completions client or a
//! deterministic scripted policy (a pure function of the message list) used
//! for tests and reproducible runs. This module also selects strategically
//! decisive states (highest outcome variance) and builds the reflection and
//! memory-operation prompts.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::action::{OFFER_TEMPLATE, PROPOSE_TEMPLATE};
use crate::game::Trajectory;
use crate::memory::MemoryBank;

pub const BASE_SYSTEM_PROMPT: &str = "You are a competitive game player. Make sure you read \
the game instructions carefully, and always follow the required format.";

/// Token budget for in-game turns.
pub const GAME_MAX_TOKENS: u32 = 1024;
/// Token budget for reflection, merge, and proposal calls.
pub const OPTIMIZER_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty message list")]
    EmptyMessages,
    #[error("http request failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
}

/// HTTP chat-completions client settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_temperature() -> f64 {
    1.0
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

/// Wire request, field order fixed so serialized bodies are byte-stable.
#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Deterministic stand-in for a model: a pure function of the messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScriptedPolicy {
    /// Play the first listed available action.
    FirstLegal,
    /// Play the last listed available action.
    LastLegal,
    /// Always emit this exact text.
    Fixed(String),
    /// Play the given token when available, otherwise the first action.
    Prefer(String),
    /// Kuhn player that obeys betting hints planted in the system prompt
    /// ("When you hold the K, bet", "call if you hold the K or Q");
    /// without hints it checks when possible and folds to bets.
    KuhnObedient,
    /// Kuhn player that always bets, and facing a bet calls with K or Q.
    KuhnBettor,
    /// Kuhn maniac (always bet/call) when the system prompt contains
    /// `tag`, otherwise a folder (always check/fold).
    TagConditional { tag: String },
    /// Optimizer stand-in: answers reflection prompts with `insight`,
    /// memory-operation prompts with `<add>insight</add>`, and proposal
    /// requests by echoing the text between the echo markers.
    PlantedOptimizer { insight: String },
}

/// Marker lines wrapped around the editable prompt in proposal requests so
/// scripted optimizers can echo it back.
pub const ECHO_BEGIN: &str = "BEGIN CURRENT CONTEXT";
pub const ECHO_END: &str = "END CURRENT CONTEXT";

/// Tokens listed on the final available-actions line of an observation.
pub fn parse_available_actions(observation: &str) -> Vec<String> {
    for line in observation.lines().rev() {
        if let Some(rest) = line.strip_prefix("Your available actions are:") {
            return rest
                .split('\'')
                .skip(1)
                .step_by(2)
                .map(|t| t.to_string())
                .collect();
        }
        if let Some(rest) = line.strip_prefix("Available Moves:") {
            return rest.split(',').map(|t| t.trim().to_string()).collect();
        }
    }
    Vec::new()
}

/// Concrete stand-in moves for template actions.
fn instantiate(token: &str) -> String {
    match token {
        OFFER_TEMPLATE => "[Offer: 1 Wheat -> 1 Ore]".to_string(),
        PROPOSE_TEMPLATE => "[Propose] $1.00".to_string(),
        other => other.to_string(),
    }
}

fn kuhn_card(observation: &str) -> Option<char> {
    let rest = observation.split("Your card is: '").nth(1)?;
    rest.chars().next()
}

impl ScriptedPolicy {
    pub fn respond(&self, messages: &[ChatMessage]) -> String {
        let system = messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let actions = parse_available_actions(user);
        let has = |t: &str| actions.iter().any(|a| a == t);
        match self {
            ScriptedPolicy::Fixed(text) => text.clone(),
            ScriptedPolicy::FirstLegal => {
                actions.first().map(|t| instantiate(t)).unwrap_or_default()
            }
            ScriptedPolicy::LastLegal => {
                actions.last().map(|t| instantiate(t)).unwrap_or_default()
            }
            ScriptedPolicy::Prefer(token) => {
                if has(token) {
                    token.clone()
                } else {
                    actions.first().map(|t| instantiate(t)).unwrap_or_default()
                }
            }
            ScriptedPolicy::KuhnObedient => {
                let card = kuhn_card(user);
                if has("[call]") {
                    // Facing a bet.
                    if system.contains("call if you hold the K or Q")
                        && matches!(card, Some('K') | Some('Q'))
                    {
                        "[call]".to_string()
                    } else {
                        "[fold]".to_string()
                    }
                } else if system.contains("When you hold the K, bet") && card == Some('K') {
                    "[bet]".to_string()
                } else {
                    "[check]".to_string()
                }
            }
            ScriptedPolicy::KuhnBettor => {
                if has("[bet]") {
                    "[bet]".to_string()
                } else if matches!(kuhn_card(user), Some('K') | Some('Q')) {
                    "[call]".to_string()
                } else {
                    "[fold]".to_string()
                }
            }
            ScriptedPolicy::TagConditional { tag } => {
                let maniac = system.contains(tag.as_str());
                if has("[bet]") {
                    if maniac { "[bet]" } else { "[check]" }.to_string()
                } else if maniac {
                    "[call]".to_string()
                } else {
                    "[fold]".to_string()
                }
            }
            ScriptedPolicy::PlantedOptimizer { insight } => {
                let all: String = messages
                    .iter()
                    .map(|m| m.content.as_str())
                    .collect::<Vec<_>>()
                    .join("\n");
                if all.contains("OPERATION FORMAT") {
                    format!("<add>{insight}</add>")
                } else if all.contains("strategically decisive") {
                    insight.clone()
                } else if let Some(echo) = extract_echo(&all) {
                    echo
                } else {
                    actions.first().map(|t| instantiate(t)).unwrap_or_default()
                }
            }
        }
    }
}

fn extract_echo(text: &str) -> Option<String> {
    let start = text.find(ECHO_BEGIN)? + ECHO_BEGIN.len();
    let end = text[start..].find(ECHO_END)? + start;
    Some(text[start..end].trim().to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ModelBackend {
    Http(HttpConfig),
    Scripted(ScriptedPolicy),
}

impl ModelBackend {
    pub fn scripted(policy: ScriptedPolicy) -> Self {
        ModelBackend::Scripted(policy)
    }

    pub fn complete(
        &self,
        messages: &[ChatMessage],
        max_tokens: u32,
    ) -> Result<String, BackendError> {
        if messages.is_empty() {
            return Err(BackendError::EmptyMessages);
        }
        match self {
            ModelBackend::Scripted(policy) => Ok(policy.respond(messages)),
            ModelBackend::Http(config) => http_complete(config, messages, max_tokens),
        }
    }
}

fn http_complete(
    config: &HttpConfig,
    messages: &[ChatMessage],
    max_tokens: u32,
) -> Result<String, BackendError> {
    let body = ChatRequest {
        model: &config.model,
        messages,
        temperature: config.temperature,
        max_tokens,
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| BackendError::Transport {
            attempts: 0,
            last: e.to_string(),
        })?;
    let mut last_error = String::new();
    for attempt in 0..config.max_attempts {
        if attempt > 0 {
            let delay = config.backoff_base_ms * 2u64.pow(attempt - 1);
            std::thread::sleep(Duration::from_millis(delay));
        }
        let mut request = client.post(&config.endpoint).json(&body);
        if let Some(var) = &config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                request = request.bearer_auth(key);
            }
        }
        match request.send() {
            Ok(response) if response.status().is_success() => {
                let parsed: ChatResponse = response
                    .json()
                    .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                return parsed
                    .choices
                    .first()
                    .map(|c| c.message.content.clone())
                    .ok_or_else(|| BackendError::BadResponse("no choices".into()));
            }
            Ok(response) => {
                last_error = format!("status {}", response.status());
            }
            Err(e) => {
                last_error = e.to_string();
            }
        }
    }
    Err(BackendError::Transport {
        attempts: config.max_attempts,
        last: last_error,
    })
}

/// Assemble the message list for one game turn: a single system message
/// (base prompt, then the candidate prompt, then the rendered memory block
/// when non-empty) followed by the observation as the user message.
pub fn assemble(
    system_base: &str,
    context_prompt: &str,
    memory_block: &str,
    observation: &str,
) -> Vec<ChatMessage> {
    let mut system = format!("{system_base}\n\n{context_prompt}");
    if !memory_block.is_empty() {
        system.push_str("\n\n");
        system.push_str(memory_block);
    }
    vec![
        ChatMessage::system(system),
        ChatMessage::user(observation.to_string()),
    ]
}

/// A state visited by several games whose outcomes disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisiveState {
    pub state_digest: u64,
    /// Observation text of the step taken from this state.
    pub rendering: String,
    pub wins: u32,
    pub losses: u32,
    pub draws: u32,
}

impl DecisiveState {
    pub fn visits(&self) -> u32 {
        self.wins + self.losses + self.draws
    }

    /// Variance of the outcomes as {-1, 0, +1} samples.
    pub fn outcome_variance(&self) -> f64 {
        let n = self.visits() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let sum = self.wins as f64 - self.losses as f64;
        let sum_sq = (self.wins + self.losses) as f64;
        sum_sq / n - (sum / n) * (sum / n)
    }
}

/// Group trajectories by intermediate state digest and return the `top`
/// states by outcome variance, visited at least twice, in descending
/// order with first-seen tie-breaking.
pub fn select_decisive_states(trajectories: &[Trajectory], top: usize) -> Vec<DecisiveState> {
    let mut order: Vec<u64> = Vec::new();
    let mut states: std::collections::HashMap<u64, DecisiveState> =
        std::collections::HashMap::new();
    for trajectory in trajectories {
        let mut seen_here = std::collections::HashSet::new();
        for (i, step) in trajectory.steps.iter().enumerate() {
            if i + 1 >= trajectory.steps.len() {
                continue; // terminal or last step: no successor observation
            }
            if !seen_here.insert(step.state_digest) {
                continue; // tally each trajectory once per state
            }
            let entry = states.entry(step.state_digest).or_insert_with(|| {
                order.push(step.state_digest);
                DecisiveState {
                    state_digest: step.state_digest,
                    rendering: trajectory.steps[i + 1].observation.clone(),
                    wins: 0,
                    losses: 0,
                    draws: 0,
                }
            });
            match trajectory.outcome {
                1 => entry.wins += 1,
                -1 => entry.losses += 1,
                _ => entry.draws += 1,
            }
        }
    }
    let mut ranked: Vec<DecisiveState> = order
        .into_iter()
        .map(|d| states[&d].clone())
        .filter(|s| s.visits() >= 2)
        .collect();
    ranked.sort_by(|a, b| {
        b.outcome_variance()
            .partial_cmp(&a.outcome_variance())
            .unwrap()
    });
    ranked.truncate(top);
    ranked
}

/// Reflection prompt for one decisive state.
pub fn reflection_prompt(state: &DecisiveState) -> String {
    format!(
        "You are analyzing strategically decisive states from this generation's games.\n\
This state showed the highest variance in outcomes, making it a critical learning opportunity.\n\
\n\
BOARD READING GUIDE:\n\
- X and O marks are occupied positions (cannot be played)\n\
- Numbers show empty positions available for play\n\
- Always check position is empty before recommending\n\
\n\
STRATEGIC STATE VIEW: {}\n\
STRATEGIC STATE OUTCOMES: {} wins, {} losses, {} draws\n\
\n\
ANALYSIS REQUIREMENTS:\n\
1. Strategic Analysis (2-3 sentences):\n\
  - Identify what makes this state unique or decisive in gameplay\n\
  - Explain why this configuration leads to varied outcomes\n\
  - Highlight patterns, imbalances, opportunities, or vulnerabilities\n\
\n\
2. Actionable Recommendations (2-3 sentences):\n\
  - Provide SPECIFIC moves or positions (e.g., \"cell 3\", \"position 5\")\n\
  - Address both offensive opportunities AND defensive necessities\n\
  - Offer concrete strategies to improve outcomes and convert losses into wins or draws\n\
\n\
Respond with clear, actionable analysis in plain text (no JSON).",
        state.rendering, state.wins, state.losses, state.draws
    )
}

/// Ask the model to reflect on one decisive state; an empty response
/// yields no insight.
pub fn reflect(
    backend: &ModelBackend,
    state: &DecisiveState,
) -> Result<Option<String>, BackendError> {
    let messages = vec![
        ChatMessage::system(BASE_SYSTEM_PROMPT),
        ChatMessage::user(reflection_prompt(state)),
    ];
    let response = backend.complete(&messages, OPTIMIZER_MAX_TOKENS)?;
    let trimmed = response.trim();
    if trimmed.is_empty() {
        Ok(None)
    } else {
        Ok(Some(trimmed.to_string()))
    }
}

/// Memory merge prompt: new insights against the numbered existing bank.
pub fn memory_op_prompt(new_insights: &[String], bank: &MemoryBank) -> String {
    let new_block = if new_insights.is_empty() {
        "(none)".to_string()
    } else {
        new_insights
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {}", i + 1, t))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let old_block = if bank.is_empty() {
        "(empty)".to_string()
    } else {
        bank.insights()
            .iter()
            .map(|i| format!("{}. {}", i.index, i.text))
            .collect::<Vec<_>>()
            .join("\n")
    };
    format!(
        "You are maintaining a state analysis library for strategic game pattern recognition. \
Update the library by performing operations on the state analyses.\n\
\n\
NEW STATE ANALYSES FROM RECENT GAMES:\n\
{new_block}\n\
\n\
EXISTING STATE ANALYSIS LIBRARY:\n\
{old_block}\n\
\n\
OPERATION FORMAT:\n\
Use simple XML tags for each operation:\n\
\n\
<add>New state analysis with strategic pattern examples.</add>\n\
<edit number=\"3\">Updated state analysis with improved strategic insights.</edit>\n\
<remove number=\"5\">Why this state analysis should be removed</remove>\n\
\n\
OPERATION GUIDELINES:\n\
- ADD: For new state analyses covering unique board configurations or strategic scenarios\n\
- EDIT: To merge similar states or enhance existing analyses with more specific advice\n\
- REMOVE: For redundant states, duplicate board patterns, or analyses lacking actionable guidance\n\
\n\
QUALITY REQUIREMENTS:\n\
- Include SPECIFIC positions, cells, or moves (e.g., \"cell 3\", \"position 5\")\n\
- Provide actionable advice addressing the state's win/loss variance\n\
- Balance offensive opportunities with defensive necessities\n\
- Help players convert losses into wins or draws\n\
- Prioritize diverse board states over duplicate analyses\n\
\n\
TECHNICAL REQUIREMENTS:\n\
- Use the 'number' attribute for EDIT/REMOVE operations (1-based numbering)\n\
- If library is empty, use ONLY ADD operations\n\
- Never reference non-existent state analysis numbers\n\
\n\
MERGE APPROACH:\n\
1. Identify new analyses covering unique board states not in the library\n\
2. Consolidate similar board positions through EDIT or REMOVE operations\n\
3. Ensure the library represents diverse game phases (opening, midgame, endgame)"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{PlayerId, StepRecord};

    fn game_messages(system: &str, observation: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(system.to_string()),
            ChatMessage::user(observation.to_string()),
        ]
    }

    #[test]
    fn parses_both_action_line_shapes() {
        assert_eq!(
            parse_available_actions("...\nYour available actions are: '[fold]', '[call]'"),
            vec!["[fold]".to_string(), "[call]".to_string()]
        );
        assert_eq!(
            parse_available_actions("board\nAvailable Moves: [0], [1], [15]"),
            vec!["[0]".to_string(), "[1]".to_string(), "[15]".to_string()]
        );
        assert!(parse_available_actions("no action line").is_empty());
    }

    #[test]
    fn scripted_policies_are_deterministic_pure_functions() {
        let messages = game_messages("s", "Your available actions are: '[check]', '[bet]'");
        let first = ScriptedPolicy::FirstLegal;
        assert_eq!(first.respond(&messages), "[check]");
        assert_eq!(first.respond(&messages), "[check]");
        assert_eq!(ScriptedPolicy::LastLegal.respond(&messages), "[bet]");
        assert_eq!(
            ScriptedPolicy::Prefer("[bet]".into()).respond(&messages),
            "[bet]"
        );
        assert_eq!(
            ScriptedPolicy::Prefer("[fold]".into()).respond(&messages),
            "[check]"
        );
    }

    #[test]
    fn templates_are_instantiated() {
        let messages = game_messages(
            "s",
            "Your available actions are: '[Offer: ... -> ...]', '[Deny]'",
        );
        assert_eq!(
            ScriptedPolicy::FirstLegal.respond(&messages),
            "[Offer: 1 Wheat -> 1 Ore]"
        );
        let messages = game_messages("s", "Your available actions are: '[Propose] $X.XX'");
        assert_eq!(
            ScriptedPolicy::FirstLegal.respond(&messages),
            "[Propose] $1.00"
        );
    }

    #[test]
    fn obedient_policy_follows_planted_hints() {
        let hinted = "When you hold the K, bet. When facing a bet, call if you hold the K or Q.";
        let obs_k = "Your card is: 'K'\nYour available actions are: '[check]', '[bet]'";
        let obs_q_facing = "Your card is: 'Q'\nYour available actions are: '[fold]', '[call]'";
        let policy = ScriptedPolicy::KuhnObedient;
        assert_eq!(policy.respond(&game_messages(hinted, obs_k)), "[bet]");
        assert_eq!(policy.respond(&game_messages(hinted, obs_q_facing)), "[call]");
        assert_eq!(policy.respond(&game_messages("bare", obs_k)), "[check]");
        assert_eq!(policy.respond(&game_messages("bare", obs_q_facing)), "[fold]");
    }

    #[test]
    fn tag_conditional_flips_on_system_tag() {
        let obs = "Your available actions are: '[check]', '[bet]'";
        let policy = ScriptedPolicy::TagConditional {
            tag: "VARIANT-A".into(),
        };
        assert_eq!(policy.respond(&game_messages("use VARIANT-A", obs)), "[bet]");
        assert_eq!(policy.respond(&game_messages("plain", obs)), "[check]");
    }

    #[test]
    fn planted_optimizer_routes_by_prompt_kind() {
        let policy = ScriptedPolicy::PlantedOptimizer {
            insight: "Bet the K.".into(),
        };
        let merge = game_messages("s", "... OPERATION FORMAT: ...");
        assert_eq!(policy.respond(&merge), "<add>Bet the K.</add>");
        let reflect_messages = game_messages("s", "strategically decisive states ...");
        assert_eq!(policy.respond(&reflect_messages), "Bet the K.");
        let proposal = game_messages(
            "s",
            &format!("rewrite this\n{ECHO_BEGIN}\nthe prompt body\n{ECHO_END}\n"),
        );
        assert_eq!(policy.respond(&proposal), "the prompt body");
    }

    #[test]
    fn assemble_orders_base_prompt_memory_observation() {
        let messages = assemble("BASE", "PROMPT", "", "OBS");
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0].content, "BASE\n\nPROMPT");
        assert_eq!(messages[1].content, "OBS");
        let with_memory = assemble("BASE", "PROMPT", "MEMORY:\n1. x\n", "OBS");
        assert_eq!(with_memory[0].content, "BASE\n\nPROMPT\n\nMEMORY:\n1. x\n");
        assert_eq!(assemble("BASE", "PROMPT", "", "OBS"), messages);
    }

    #[test]
    fn request_body_is_byte_stable() {
        let messages = game_messages("sys", "obs");
        let body = ChatRequest {
            model: "test-model",
            messages: &messages,
            temperature: 1.0,
            max_tokens: 1024,
        };
        let a = serde_json::to_string(&body).unwrap();
        let b = serde_json::to_string(&body).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"model\":\"test-model\",\"messages\":"));
        assert!(a.contains("\"temperature\":1.0"));
        assert!(a.contains("\"max_tokens\":1024"));
    }

    fn trajectory(outcome: i8, digests: &[u64]) -> Trajectory {
        let mut t = Trajectory::new("simpletak", 0);
        for (i, &d) in digests.iter().enumerate() {
            t.push(StepRecord {
                observation: format!("obs-{i}-{d}"),
                actor: PlayerId(0),
                raw_response: String::new(),
                extracted: Some("[0]".into()),
                valid: true,
                state_digest: d,
            });
        }
        t.finish(crate::game::Outcome(outcome));
        t
    }

    #[test]
    fn decisive_states_rank_by_outcome_variance() {
        // Digest 10: 2 wins, 2 losses (variance 1.0, the maximum).
        // Digest 20: 4 wins, 2 losses (variance 8/9, ranked lower).
        // Digest 30: appears once (visits < 2, dropped).
        let trajectories = vec![
            trajectory(1, &[10, 20, 99]),
            trajectory(1, &[10, 20, 98]),
            trajectory(-1, &[10, 20, 97]),
            trajectory(-1, &[10, 20, 96]),
            trajectory(1, &[20, 30, 95]),
            trajectory(1, &[20, 94, 93]),
        ];
        let states = select_decisive_states(&trajectories, 8);
        assert_eq!(states[0].state_digest, 10);
        assert_eq!((states[0].wins, states[0].losses), (2, 2));
        assert!((states[0].outcome_variance() - 1.0).abs() < 1e-12);
        let s20 = states.iter().find(|s| s.state_digest == 20).unwrap();
        assert_eq!((s20.wins, s20.losses), (4, 2));
        assert!((s20.outcome_variance() - 8.0 / 9.0).abs() < 1e-12);
        assert!(states.iter().all(|s| s.state_digest != 30));

        // Brute-force oracle over the same grouping.
        for s in &states {
            let outcomes: Vec<f64> = trajectories
                .iter()
                .filter(|t| {
                    t.steps[..t.steps.len() - 1]
                        .iter()
                        .any(|st| st.state_digest == s.state_digest)
                })
                .map(|t| t.outcome as f64)
                .collect();
            let n = outcomes.len() as f64;
            let mean = outcomes.iter().sum::<f64>() / n;
            let var = outcomes.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            assert!((s.outcome_variance() - var).abs() < 1e-12);
        }
    }

    #[test]
    fn last_step_states_are_not_decisive_candidates() {
        let trajectories = vec![trajectory(1, &[5]), trajectory(-1, &[5])];
        assert!(select_decisive_states(&trajectories, 8).is_empty());
    }

    #[test]
    fn reflection_prompt_fills_template() {
        let state = DecisiveState {
            state_digest: 1,
            rendering: "THE-BOARD".into(),
            wins: 3,
            losses: 1,
            draws: 0,
        };
        let prompt = reflection_prompt(&state);
        assert!(prompt.contains("STRATEGIC STATE VIEW: THE-BOARD"));
        assert!(prompt.contains("3 wins, 1 losses, 0 draws"));
        assert!(prompt.contains("plain text (no JSON)"));
        assert!(prompt.contains("BOARD READING GUIDE:"));
    }

    #[test]
    fn reflect_returns_scripted_insight_and_drops_empty() {
        let state = DecisiveState {
            state_digest: 1,
            rendering: "B".into(),
            wins: 1,
            losses: 1,
            draws: 0,
        };
        let backend = ModelBackend::scripted(ScriptedPolicy::PlantedOptimizer {
            insight: "Take the center.".into(),
        });
        assert_eq!(
            reflect(&backend, &state).unwrap(),
            Some("Take the center.".to_string())
        );
        let silent = ModelBackend::scripted(ScriptedPolicy::Fixed("  ".into()));
        assert_eq!(reflect(&silent, &state).unwrap(), None);
    }

    #[test]
    fn memory_op_prompt_numbers_both_libraries() {
        let mut bank = MemoryBank::new("kuhn_poker");
        bank.apply_ops(
            &[crate::memory::MemoryOp::Add("old lesson".into())],
            0,
        );
        let prompt = memory_op_prompt(&["new lesson".to_string()], &bank);
        assert!(prompt.contains("NEW STATE ANALYSES FROM RECENT GAMES:\n1. new lesson"));
        assert!(prompt.contains("EXISTING STATE ANALYSIS LIBRARY:\n1. old lesson"));
        assert!(prompt.contains("If library is empty, use ONLY ADD operations"));
        let empty = memory_op_prompt(&[], &MemoryBank::new("kuhn_poker"));
        assert!(empty.contains("EXISTING STATE ANALYSIS LIBRARY:\n(empty)"));
    }

    #[test]
    fn empty_message_list_is_rejected() {
        let backend = ModelBackend::scripted(ScriptedPolicy::FirstLegal);
        assert!(matches!(
            backend.complete(&[], 10),
            Err(BackendError::EmptyMessages)
        ));
    }
}
