//! Resource negotiation with private valuations.
//!
//! Each player starts with seeded quantities (5..=25) of five resources and
//! private unit values (5..=40). Players alternate for 10 turns; a turn is
//! an offer, an acceptance of the opponent's pending offer, or a denial.
//! A counter-offer supersedes the pending one. At the end, each player's
//! gain is their inventory value change at their own valuations; the larger
//! gain wins, equal gains draw.

use rand::{Rng, RngCore};

use crate::game::action::{
    bundle_total, format_bundle, format_offer, parse_offer_bundles, Bundle, OFFER_TEMPLATE,
    RESOURCE_NAMES,
};
use crate::game::rng::{stream_rng, tags};
use crate::game::{GameError, GameState, Outcome, PlayerId};

pub const ACTION_FORMAT: &str = "Use the following special tokens for actions:\n  \
- '[Offer: 3 Sheep, 2 Ore -> 5 Brick, 2 Sheep]': [Offer: Offered Resources -> Requested Resources]\n  \
- '[Accept]': To accept an incoming offer.\n  \
- '[Deny]': To deny an incoming offer (default).";

const TURNS: u32 = 10;

#[derive(Debug, Clone)]
struct PendingOffer {
    by: PlayerId,
    give: Bundle,
    get: Bundle,
}

#[derive(Debug, Clone)]
pub struct NegotiationState {
    seed: u64,
    quantities: [Bundle; 2],
    values: [Bundle; 2],
    initial_value: [u32; 2],
    pending: Option<PendingOffer>,
    /// Turns taken so far, 0..TURNS. Player (turn mod 2) acts.
    turn: u32,
    forfeited: Option<PlayerId>,
}

fn bundle_value(qty: &Bundle, values: &Bundle) -> u32 {
    qty.iter().zip(values).map(|(q, v)| q * v).sum()
}

fn covers(have: &Bundle, need: &Bundle) -> bool {
    have.iter().zip(need).all(|(h, n)| h >= n)
}

impl NegotiationState {
    pub fn new(seed: u64) -> Self {
        let mut quantities = [[0u32; 5]; 2];
        let mut values = [[0u32; 5]; 2];
        for player in 0..2 {
            let mut rng = stream_rng(seed, &[tags::VALUATION, player as u64]);
            for r in 0..5 {
                quantities[player][r] = rng.gen_range(5..=25);
                values[player][r] = rng.gen_range(5..=40);
            }
        }
        let initial_value = [
            bundle_value(&quantities[0], &values[0]),
            bundle_value(&quantities[1], &values[1]),
        ];
        NegotiationState {
            seed,
            quantities,
            values,
            initial_value,
            pending: None,
            turn: 0,
            forfeited: None,
        }
    }

    pub fn gain(&self, player: PlayerId) -> i64 {
        let now = bundle_value(&self.quantities[player.index()], &self.values[player.index()]);
        now as i64 - self.initial_value[player.index()] as i64
    }

    fn acceptable(&self, player: PlayerId) -> Option<&PendingOffer> {
        let offer = self.pending.as_ref()?;
        if offer.by == player {
            return None;
        }
        // Transferable both ways: the offerer still holds the offered
        // bundle and the acceptor holds the requested one.
        if covers(&self.quantities[offer.by.index()], &offer.give)
            && covers(&self.quantities[player.index()], &offer.get)
        {
            Some(offer)
        } else {
            None
        }
    }

    fn execute_trade(&mut self, offer: PendingOffer) {
        let by = offer.by.index();
        let to = offer.by.opponent().index();
        for r in 0..5 {
            self.quantities[by][r] = self.quantities[by][r] - offer.give[r] + offer.get[r];
            self.quantities[to][r] = self.quantities[to][r] + offer.give[r] - offer.get[r];
        }
    }
}

impl GameState for NegotiationState {
    fn game_id(&self) -> &'static str {
        "simple_negotiation"
    }

    fn is_terminal(&self) -> bool {
        self.forfeited.is_some() || self.turn >= TURNS
    }

    fn player_to_act(&self) -> PlayerId {
        PlayerId((self.turn % 2) as u8)
    }

    fn legal_actions(&self) -> Vec<String> {
        let player = self.player_to_act();
        let mut out = Vec::new();
        if bundle_total(&self.quantities[player.index()]) > 0 {
            out.push(OFFER_TEMPLATE.to_string());
        }
        if self.acceptable(player).is_some() {
            out.push("[Accept]".to_string());
        }
        out.push("[Deny]".to_string());
        out
    }

    fn validate(&self, token: &str) -> bool {
        if self.is_terminal() {
            return false;
        }
        let player = self.player_to_act();
        match token {
            "[Deny]" => true,
            "[Accept]" => self.acceptable(player).is_some(),
            other => match parse_offer_bundles(other) {
                Some((give, _)) => covers(&self.quantities[player.index()], &give),
                None => false,
            },
        }
    }

    fn observe(&self, player: PlayerId) -> String {
        let idx = player.index();
        let mut out = String::new();
        out.push_str(&format!("You are Player {player} in the Negotiation Game.\n"));
        out.push_str(
            "You have some resources, and your task is to trade such that the total value \
             of your resources increases.\n",
        );
        out.push_str("The resources and associated values you currently have are:\n");
        for r in 0..5 {
            out.push_str(&format!(
                "        + [{:<5}]   Qty: {:<2}   Value: {}\n",
                RESOURCE_NAMES[r], self.quantities[idx][r], self.values[idx][r]
            ));
        }
        out.push_str("At each turn, you can talk to your opponent and make a trade offer.\n");
        out.push_str(ACTION_FORMAT);
        out.push('\n');
        out.push_str(&format!("The game lasts for {TURNS} turns in total.\n"));
        out.push_str(&format!("Turn {} of {TURNS}.\n", self.turn + 1));
        if let Some(offer) = &self.pending {
            out.push_str(&format!(
                "Pending offer from Player {}: they give {} and request {}.\n",
                offer.by,
                format_bundle(&offer.give),
                format_bundle(&offer.get)
            ));
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
            "[Deny]" => {
                self.pending = None;
            }
            "[Accept]" => {
                let offer = self
                    .acceptable(player)
                    .cloned()
                    .expect("validated acceptable");
                self.execute_trade(offer);
                self.pending = None;
            }
            other => {
                let (give, get) = parse_offer_bundles(other).expect("validated offer");
                self.pending = Some(PendingOffer {
                    by: player,
                    give,
                    get,
                });
            }
        }
        self.turn += 1;
        Ok(())
    }

    fn forfeit(&mut self, loser: PlayerId) {
        self.forfeited = Some(loser);
    }

    fn outcome(&self) -> Option<Outcome> {
        if let Some(loser) = self.forfeited {
            return Some(Outcome::forfeit_by(loser));
        }
        if self.turn < TURNS {
            return None;
        }
        Some(Outcome(
            (self.gain(PlayerId::P0) - self.gain(PlayerId::P1)).signum() as i8,
        ))
    }

    fn canonical(&self) -> String {
        format!(
            "simple_negotiation|seed={}|qty={:?}|val={:?}|init={:?}|pending={}|turn={}|forfeit={:?}",
            self.seed,
            self.quantities,
            self.values,
            self.initial_value,
            self.pending
                .as_ref()
                .map(|o| format!("{}:{}", o.by, format_offer(&o.give, &o.get)))
                .unwrap_or_else(|| "none".into()),
            self.turn,
            self.forfeited
        )
    }

    fn boxed_clone(&self) -> Box<dyn GameState> {
        Box::new(self.clone())
    }

    fn sample_legal_action(&self, rng: &mut dyn RngCore) -> String {
        let player = self.player_to_act();
        let legal = self.legal_actions();
        let pick = &legal[(rng.next_u64() % legal.len() as u64) as usize];
        if pick != OFFER_TEMPLATE {
            return pick.clone();
        }
        // Synthesize a minimal concrete offer: one owned unit for one
        // unit of a random resource kind.
        let owned: Vec<usize> = (0..5)
            .filter(|&r| self.quantities[player.index()][r] > 0)
            .collect();
        let give_kind = owned[(rng.next_u64() % owned.len() as u64) as usize];
        let get_kind = (rng.next_u64() % 5) as usize;
        let mut give = [0u32; 5];
        let mut get = [0u32; 5];
        give[give_kind] = 1;
        get[get_kind] = 1;
        format_offer(&give, &get)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valuations_are_seeded_and_in_range() {
        let a = NegotiationState::new(11);
        let b = NegotiationState::new(11);
        assert_eq!(a.quantities, b.quantities);
        assert_eq!(a.values, b.values);
        for p in 0..2 {
            for r in 0..5 {
                assert!((5..=25).contains(&a.quantities[p][r]));
                assert!((5..=40).contains(&a.values[p][r]));
            }
        }
        assert_ne!(
            NegotiationState::new(11).values,
            NegotiationState::new(12).values
        );
    }

    #[test]
    fn no_trades_is_a_draw() {
        let mut state = NegotiationState::new(3);
        while !state.is_terminal() {
            state.apply("[Deny]").unwrap();
        }
        assert_eq!(state.gain(PlayerId::P0), 0);
        assert_eq!(state.gain(PlayerId::P1), 0);
        assert_eq!(state.outcome(), Some(Outcome::DRAW));
    }

    #[test]
    fn accepted_trade_moves_exact_bundles_and_ledger_matches() {
        let mut state = NegotiationState::new(3);
        state.quantities = [[14, 15, 18, 12, 22], [10, 10, 10, 10, 10]];
        state.values = [[6, 11, 18, 27, 38], [20, 20, 20, 20, 20]];
        state.initial_value = [
            bundle_value(&state.quantities[0], &state.values[0]),
            bundle_value(&state.quantities[1], &state.values[1]),
        ];
        // P0 offers 1 Wheat (own value 6) for 1 Ore (own value 38).
        state.apply("[Offer: 1 Wheat -> 1 Ore]").unwrap();
        state.apply("[Accept]").unwrap();
        assert_eq!(state.quantities[0], [13, 15, 18, 12, 23]);
        assert_eq!(state.quantities[1], [11, 10, 10, 10, 9]);
        assert_eq!(state.gain(PlayerId::P0), 32);
        assert_eq!(state.gain(PlayerId::P1), 0);
        while !state.is_terminal() {
            state.apply("[Deny]").unwrap();
        }
        assert_eq!(state.outcome(), Some(Outcome::P0_WIN));
    }

    #[test]
    fn counter_offer_supersedes_pending() {
        let mut state = NegotiationState::new(3);
        state.apply("[Offer: 1 Wheat -> 1 Ore]").unwrap();
        state.apply("[Offer: 2 Wood -> 1 Sheep]").unwrap();
        let offer = state.pending.as_ref().unwrap();
        assert_eq!(offer.by, PlayerId::P1);
        assert_eq!(format_offer(&offer.give, &offer.get), "[Offer: 2 Wood -> 1 Sheep]");
        // P0 may now accept P1's counter; P1's old target is gone.
        assert!(state.validate("[Accept]"));
    }

    #[test]
    fn cannot_offer_more_than_owned() {
        let mut state = NegotiationState::new(3);
        state.quantities[0] = [1, 0, 0, 0, 0];
        assert!(!state.validate("[Offer: 2 Wheat -> 1 Ore]"));
        assert!(state.validate("[Offer: 1 Wheat -> 1 Ore]"));
    }

    #[test]
    fn accept_requires_holding_the_requested_bundle() {
        let mut state = NegotiationState::new(3);
        state.quantities[1] = [0, 0, 0, 0, 0];
        state.apply("[Offer: 1 Wheat -> 1 Ore]").unwrap();
        assert!(!state.validate("[Accept]"));
        assert!(!state.legal_actions().contains(&"[Accept]".to_string()));
    }

    #[test]
    fn quantities_stay_non_negative_under_random_play() {
        for seed in 0..50 {
            let mut state = NegotiationState::new(seed);
            let mut rng = stream_rng(seed, &[66]);
            while !state.is_terminal() {
                let token = state.sample_legal_action(&mut rng);
                assert!(state.validate(&token), "sampled {token}");
                state.apply(&token).unwrap();
            }
            assert_eq!(state.turn, TURNS);
        }
    }
}
