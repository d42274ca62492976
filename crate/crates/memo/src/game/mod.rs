//! Two-player, turn-based, partially observable game contract.
//!
//! A game is a seed-deterministic state machine: all chance events (deals,
//! shuffles, secret valuations) are drawn from counter-based generators keyed
//! by the game seed, so replaying a seed plus an action sequence reproduces
//! every state bit-exactly.

pub mod action;
pub mod digest;
pub mod rng;
pub mod trajectory;

pub use action::extract_action;
pub use digest::{fnv1a64, state_digest};
pub use trajectory::{StepRecord, Trajectory, TrajectoryPrefix};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the two seats in a game. `0` and `1` are the only values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u8);

impl PlayerId {
    pub const P0: PlayerId = PlayerId(0);
    pub const P1: PlayerId = PlayerId(1);

    pub fn opponent(self) -> PlayerId {
        PlayerId(1 - self.0)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for PlayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Terminal payoff to Player 0: +1 win, 0 draw, -1 loss.
/// The game is zero-sum, so Player 1's payoff is the negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Outcome(pub i8);

impl Outcome {
    pub const P0_WIN: Outcome = Outcome(1);
    pub const DRAW: Outcome = Outcome(0);
    pub const P1_WIN: Outcome = Outcome(-1);

    /// Payoff from `player`'s perspective.
    pub fn for_player(self, player: PlayerId) -> i8 {
        if player == PlayerId::P0 {
            self.0
        } else {
            -self.0
        }
    }

    /// Outcome in which `loser` forfeits.
    pub fn forfeit_by(loser: PlayerId) -> Outcome {
        if loser == PlayerId::P0 {
            Outcome::P1_WIN
        } else {
            Outcome::P0_WIN
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("unknown game id: {0}")]
    UnknownGame(String),
    #[error("cannot step a terminal state")]
    TerminalState,
    #[error("state is not terminal")]
    NonTerminal,
    #[error("player {actor} acted out of turn (expected {expected})")]
    OutOfTurn { actor: PlayerId, expected: PlayerId },
    #[error("illegal action: {0}")]
    IllegalAction(String),
    #[error("state digest mismatch: expected {expected:#018x}, got {actual:#018x}")]
    DigestMismatch { expected: u64, actual: u64 },
}

/// A single player response and what was extracted from it.
///
/// Invalid records (no legal action could be extracted) are kept, never
/// dropped: they are part of the unaltered course of play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub actor: PlayerId,
    pub raw_response: String,
    pub extracted: Option<String>,
    pub valid: bool,
}

impl ActionRecord {
    pub fn valid_move(actor: PlayerId, raw: impl Into<String>, token: impl Into<String>) -> Self {
        ActionRecord {
            actor,
            raw_response: raw.into(),
            extracted: Some(token.into()),
            valid: true,
        }
    }

    pub fn invalid(actor: PlayerId, raw: impl Into<String>) -> Self {
        ActionRecord {
            actor,
            raw_response: raw.into(),
            extracted: None,
            valid: false,
        }
    }
}

/// Game state contract shared by all five environments.
///
/// States are deterministic given (seed, action sequence). A non-terminal
/// state always has at least one legal action for the player to act.
pub trait GameState: Send {
    fn game_id(&self) -> &'static str;

    fn is_terminal(&self) -> bool;

    /// The player whose turn it is. Meaningless on terminal states.
    fn player_to_act(&self) -> PlayerId;

    /// Action tokens available right now. Parameterized action spaces
    /// (offers, proposals) are represented by a template token; concrete
    /// instances are checked with [`GameState::validate`].
    fn legal_actions(&self) -> Vec<String>;

    /// True iff `token` is a concrete action playable in this state.
    fn validate(&self, token: &str) -> bool;

    /// Everything visible to `player`, rendered as the environment text the
    /// model sees. Never leaks the opponent's private state.
    fn observe(&self, player: PlayerId) -> String;

    /// Apply a validated concrete action for the player to act.
    fn apply(&mut self, token: &str) -> Result<(), GameError>;

    /// End the game immediately with the outcome set against `loser`.
    fn forfeit(&mut self, loser: PlayerId);

    fn outcome(&self) -> Option<Outcome>;

    /// Canonical textual serialization of the full (hidden) state. Input to
    /// the state digest; never used for game logic.
    fn canonical(&self) -> String;

    fn boxed_clone(&self) -> Box<dyn GameState>;

    /// A uniformly random concrete legal action. Games with template actions
    /// override this to synthesize concrete instances.
    fn sample_legal_action(&self, rng: &mut dyn RngCore) -> String {
        let actions = self.legal_actions();
        let i = (rng.next_u64() % actions.len() as u64) as usize;
        actions[i].clone()
    }
}

/// Advance `state` by one recorded turn.
///
/// A valid record applies game semantics; an invalid one ends the game with
/// the outcome set against the actor (the forfeiture policy). Either way the
/// caller appends the record to the trajectory.
pub fn step(state: &mut dyn GameState, record: &ActionRecord) -> Result<(), GameError> {
    if state.is_terminal() {
        return Err(GameError::TerminalState);
    }
    let expected = state.player_to_act();
    if record.actor != expected {
        return Err(GameError::OutOfTurn {
            actor: record.actor,
            expected,
        });
    }
    if record.valid {
        let token = record
            .extracted
            .as_deref()
            .ok_or_else(|| GameError::IllegalAction("valid record without a token".into()))?;
        state.apply(token)
    } else {
        state.forfeit(record.actor);
        Ok(())
    }
}
