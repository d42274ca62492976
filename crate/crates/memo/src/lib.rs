//! Weight-free self-play context optimization for two-player text games.
//!
//! The crate couples four mechanisms:
//!
//! - a tournament loop that rates candidate instruction contexts with
//!   TrueSkill and selects them by a conservative lower-confidence bound,
//! - a persistent memory bank of textual insights maintained through
//!   add/edit/remove merge operations,
//! - a prioritized replay buffer that revisits rare trajectory prefixes,
//! - five deterministic text-game environments to play it all in.
//!
//! Everything is seed-deterministic: a full run with scripted model
//! backends is bit-reproducible from its master seed.

pub mod backend;
pub mod evolve;
pub mod game;
pub mod games;
pub mod memory;
pub mod orchestrator;
pub mod rating;
pub mod replay;

pub use game::{ActionRecord, GameError, GameState, Outcome, PlayerId, Trajectory};
