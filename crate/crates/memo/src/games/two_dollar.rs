//! Two-dollar split bargaining.
//!
//! Players alternate one action per round over at most 20 rounds: propose a
//! split of 200 cents (the amount names the proposer's own share), accept
//! the opponent's standing proposal, or reject it. A new proposal
//! supersedes the standing one. The larger accepted share wins; an even
//! split or no agreement is a draw.

use rand::RngCore;

use crate::game::action::{format_propose, parse_amount, PROPOSE_TEMPLATE};
use crate::game::{GameError, GameState, Outcome, PlayerId};

pub const ACTION_FORMAT: &str = "REQUIRED ACTION FORMAT:\n\
Always provide your reasoning/persuasion BEFORE the bracketed action.\n\
Any text after the bracketed action will be ignored.\n\
Available actions:\n\
- Make a proposal: \"I think this is fair because... [Propose] $X.XX\"\n\
- Accept current proposal: \"This works for me because... [Accept]\"\n\
- Reject current proposal: \"I can't accept this because... [Reject]\"";

const TOTAL_CENTS: u32 = 200;
const MAX_ROUNDS: u32 = 20;

#[derive(Debug, Clone)]
pub struct TwoDollarState {
    /// Rounds already played, 0..MAX_ROUNDS. Player (round mod 2) acts.
    round: u32,
    /// Standing proposal: (proposer, proposer's share in cents).
    pending: Option<(PlayerId, u32)>,
    /// Final shares in cents once a proposal is accepted.
    agreement: Option<[u32; 2]>,
    forfeited: Option<PlayerId>,
}

impl TwoDollarState {
    /// The seed is accepted for registry uniformity; the game has no
    /// chance events.
    pub fn new(_seed: u64) -> Self {
        TwoDollarState {
            round: 0,
            pending: None,
            agreement: None,
            forfeited: None,
        }
    }

    pub fn shares(&self) -> Option<[u32; 2]> {
        self.agreement
    }

    fn respondable(&self, player: PlayerId) -> bool {
        matches!(self.pending, Some((by, _)) if by != player)
    }

    fn parse_propose(token: &str) -> Option<u32> {
        let rest = token.strip_prefix("[Propose]")?;
        let cents = parse_amount(rest)?;
        (cents <= TOTAL_CENTS).then_some(cents)
    }
}

impl GameState for TwoDollarState {
    fn game_id(&self) -> &'static str {
        "two_dollar"
    }

    fn is_terminal(&self) -> bool {
        self.forfeited.is_some() || self.agreement.is_some() || self.round >= MAX_ROUNDS
    }

    fn player_to_act(&self) -> PlayerId {
        PlayerId((self.round % 2) as u8)
    }

    fn legal_actions(&self) -> Vec<String> {
        let mut out = vec![PROPOSE_TEMPLATE.to_string()];
        if self.respondable(self.player_to_act()) {
            out.push("[Accept]".to_string());
            out.push("[Reject]".to_string());
        }
        out
    }

    fn validate(&self, token: &str) -> bool {
        if self.is_terminal() {
            return false;
        }
        match token {
            "[Accept]" | "[Reject]" => self.respondable(self.player_to_act()),
            other => Self::parse_propose(other).is_some(),
        }
    }

    fn observe(&self, player: PlayerId) -> String {
        let mut out = String::new();
        out.push_str("[GAME] TWO DOLLAR NEGOTIATION GAME\n");
        out.push_str(&format!(
            "You are Player {player} negotiating with another player over how to split $2.00 total.\n"
        ));
        out.push_str(&format!("There are {MAX_ROUNDS} maximum rounds.\n"));
        out.push_str("GAME RULES:\n");
        out.push_str("- You must reach an agreement on how to split the $2.00\n");
        out.push_str("- If no agreement is reached, both players get $0.00\n");
        out.push_str(ACTION_FORMAT);
        out.push('\n');
        out.push_str(&format!(
            "[GAME] === ROUND {} of {MAX_ROUNDS} ===\n",
            self.round + 1
        ));
        if let Some((by, cents)) = self.pending {
            if by == player {
                out.push_str(&format!(
                    "Your standing proposal: you get ${}.{:02}, they get ${}.{:02}\n",
                    cents / 100,
                    cents % 100,
                    (TOTAL_CENTS - cents) / 100,
                    (TOTAL_CENTS - cents) % 100
                ));
            } else {
                out.push_str(&format!(
                    "Current proposal from Player {by}: they get ${}.{:02}, you get ${}.{:02}\n",
                    cents / 100,
                    cents % 100,
                    (TOTAL_CENTS - cents) / 100,
                    (TOTAL_CENTS - cents) % 100
                ));
            }
        }
        let legal = self.legal_actions();
        out.push_str(&format!(
            "Your available actions are: {}",
            legal
                .iter()
                .map(|t| format!("'{t}'"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        out
    }

    fn apply(&mut self, token: &str) -> Result<(), GameError> {
        if !self.validate(token) {
            return Err(GameError::IllegalAction(token.to_string()));
        }
        let player = self.player_to_act();
        match token {
            "[Accept]" => {
                let (by, cents) = self.pending.take().expect("validated respondable");
                let mut shares = [0u32; 2];
                shares[by.index()] = cents;
                shares[by.opponent().index()] = TOTAL_CENTS - cents;
                self.agreement = Some(shares);
            }
            "[Reject]" => {
                self.pending = None;
            }
            other => {
                let cents = Self::parse_propose(other).expect("validated proposal");
                self.pending = Some((player, cents));
            }
        }
        self.round += 1;
        Ok(())
    }

    fn forfeit(&mut self, loser: PlayerId) {
        self.forfeited = Some(loser);
    }

    fn outcome(&self) -> Option<Outcome> {
        if let Some(loser) = self.forfeited {
            return Some(Outcome::forfeit_by(loser));
        }
        if let Some([a, b]) = self.agreement {
            return Some(Outcome((a as i64 - b as i64).signum() as i8));
        }
        if self.round >= MAX_ROUNDS {
            return Some(Outcome::DRAW);
        }
        None
    }

    fn canonical(&self) -> String {
        format!(
            "two_dollar|round={}|pending={:?}|agreement={:?}|forfeit={:?}",
            self.round, self.pending, self.agreement, self.forfeited
        )
    }

    fn boxed_clone(&self) -> Box<dyn GameState> {
        Box::new(self.clone())
    }

    fn sample_legal_action(&self, rng: &mut dyn RngCore) -> String {
        let legal = self.legal_actions();
        let pick = &legal[(rng.next_u64() % legal.len() as u64) as usize];
        if pick == PROPOSE_TEMPLATE {
            format_propose((rng.next_u64() % (TOTAL_CENTS as u64 + 1)) as u32)
        } else {
            pick.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::rng::stream_rng;

    #[test]
    fn accepted_split_sums_to_200_and_larger_share_wins() {
        let mut state = TwoDollarState::new(0);
        state.apply("[Propose] $1.20").unwrap();
        state.apply("[Accept]").unwrap();
        assert_eq!(state.shares(), Some([120, 80]));
        assert_eq!(state.outcome(), Some(Outcome::P0_WIN));
    }

    #[test]
    fn even_split_is_a_draw() {
        let mut state = TwoDollarState::new(0);
        state.apply("[Propose] $1.00").unwrap();
        state.apply("[Accept]").unwrap();
        assert_eq!(state.outcome(), Some(Outcome::DRAW));
    }

    #[test]
    fn twenty_rounds_without_agreement_is_a_draw() {
        let mut state = TwoDollarState::new(0);
        for _ in 0..10 {
            state.apply("[Propose] $1.50").unwrap();
            state.apply("[Reject]").unwrap();
        }
        assert!(state.is_terminal());
        assert_eq!(state.outcome(), Some(Outcome::DRAW));
    }

    #[test]
    fn responses_require_an_opponent_proposal() {
        let state = TwoDollarState::new(0);
        assert!(!state.validate("[Accept]"));
        assert!(!state.validate("[Reject]"));
        assert_eq!(state.legal_actions(), vec![PROPOSE_TEMPLATE.to_string()]);
        let mut state = state;
        state.apply("[Propose] $1.50").unwrap();
        // P1 now holds all three options.
        assert_eq!(state.legal_actions().len(), 3);
    }

    #[test]
    fn proposal_supersedes_and_binds_until_answered() {
        let mut state = TwoDollarState::new(0);
        state.apply("[Propose] $1.50").unwrap();
        state.apply("[Propose] $1.40").unwrap();
        assert_eq!(state.pending, Some((PlayerId::P1, 140)));
        state.apply("[Reject]").unwrap();
        assert_eq!(state.pending, None);
    }

    #[test]
    fn proposals_above_total_are_invalid() {
        let state = TwoDollarState::new(0);
        assert!(!state.validate("[Propose] $2.01"));
        assert!(state.validate("[Propose] $2.00"));
        assert!(state.validate("[Propose] $0.00"));
    }

    #[test]
    fn random_play_never_breaks_cent_accounting() {
        for seed in 0..100u64 {
            let mut state = TwoDollarState::new(seed);
            let mut rng = stream_rng(seed, &[33]);
            while !state.is_terminal() {
                let token = state.sample_legal_action(&mut rng);
                assert!(state.validate(&token));
                state.apply(&token).unwrap();
            }
            if let Some([a, b]) = state.shares() {
                assert_eq!(a + b, 200);
            }
        }
    }
}
