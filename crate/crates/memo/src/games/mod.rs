//! The five game environments and their registry.

pub mod briscola;
pub mod kuhn;
pub mod negotiation;
pub mod tak;
pub mod two_dollar;

use crate::game::digest::state_digest;
use crate::game::{GameError, GameState, TrajectoryPrefix};

pub const GAME_IDS: [&str; 5] = [
    "kuhn_poker",
    "briscola",
    "simpletak",
    "simple_negotiation",
    "two_dollar",
];

/// Fresh initial state with all chance events keyed by `seed`.
pub fn new_game(game_id: &str, seed: u64) -> Result<Box<dyn GameState>, GameError> {
    match game_id {
        "kuhn_poker" => Ok(Box::new(kuhn::KuhnState::new(seed))),
        "briscola" => Ok(Box::new(briscola::BriscolaState::new(seed))),
        "simpletak" => Ok(Box::new(tak::TakState::new(seed))),
        "simple_negotiation" => Ok(Box::new(negotiation::NegotiationState::new(seed))),
        "two_dollar" => Ok(Box::new(two_dollar::TwoDollarState::new(seed))),
        other => Err(GameError::UnknownGame(other.to_string())),
    }
}

/// Rebuild the state a prefix leads to and verify its digest.
pub fn resume(prefix: &TrajectoryPrefix) -> Result<Box<dyn GameState>, GameError> {
    let mut state = new_game(&prefix.game_id, prefix.seed)?;
    for token in &prefix.actions {
        if !state.validate(token) {
            return Err(GameError::IllegalAction(token.clone()));
        }
        state.apply(token)?;
    }
    let actual = state_digest(state.as_ref());
    if actual != prefix.state_digest {
        return Err(GameError::DigestMismatch {
            expected: prefix.state_digest,
            actual,
        });
    }
    Ok(state)
}

/// The action-format rules block of a game's prompt. This text is the
/// protected region that context proposals must preserve verbatim.
pub fn action_format_block(game_id: &str) -> Result<&'static str, GameError> {
    match game_id {
        "kuhn_poker" => Ok(kuhn::ACTION_FORMAT),
        "briscola" => Ok(briscola::ACTION_FORMAT),
        "simpletak" => Ok(tak::ACTION_FORMAT),
        "simple_negotiation" => Ok(negotiation::ACTION_FORMAT),
        "two_dollar" => Ok(two_dollar::ACTION_FORMAT),
        other => Err(GameError::UnknownGame(other.to_string())),
    }
}
