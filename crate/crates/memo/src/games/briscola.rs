//! Two-player Briscola over the 40-card Italian deck.
//!
//! Points: A=11, 3=10, K=4, Q=3, J=2, others 0 (120 total). Power within a
//! suit: A > 3 > K > Q > J > 7 > 6 > 5 > 4 > 2. Trump cards beat non-trump
//! cards regardless of power; an off-suit non-trump reply loses to the
//! leader. The trick winner captures both cards' points, draws first, and
//! leads the next trick. The face-up trump card is drawn last.

use rand::seq::SliceRandom;

use crate::game::rng::{stream_rng, tags};
use crate::game::{GameError, GameState, Outcome, PlayerId};

pub const ACTION_FORMAT: &str =
    "Action: '[play X]' where X is the position (1-3) of the card in your hand";

const SUITS: [char; 4] = ['\u{2660}', '\u{2665}', '\u{2666}', '\u{2663}'];
const RANKS: [&str; 10] = ["A", "2", "3", "4", "5", "6", "7", "J", "Q", "K"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Card {
    /// Index into [`SUITS`].
    pub suit: u8,
    /// Index into [`RANKS`].
    pub rank: u8,
}

impl Card {
    pub fn points(self) -> u32 {
        match RANKS[self.rank as usize] {
            "A" => 11,
            "3" => 10,
            "K" => 4,
            "Q" => 3,
            "J" => 2,
            _ => 0,
        }
    }

    /// Rank strength within a suit; higher wins.
    pub fn power(self) -> u32 {
        match RANKS[self.rank as usize] {
            "A" => 9,
            "3" => 8,
            "K" => 7,
            "Q" => 6,
            "J" => 5,
            "7" => 4,
            "6" => 3,
            "5" => 2,
            "4" => 1,
            _ => 0, // "2"
        }
    }

    pub fn label(self) -> String {
        format!("{}{}", RANKS[self.rank as usize], SUITS[self.suit as usize])
    }
}

/// Winner of a completed trick: true if the reply beats the lead.
pub fn reply_wins(lead: Card, reply: Card, trump: u8) -> bool {
    if lead.suit == reply.suit {
        reply.power() > lead.power()
    } else {
        reply.suit == trump
    }
}

#[derive(Debug, Clone)]
pub struct BriscolaState {
    seed: u64,
    trump: u8,
    trump_card: Card,
    /// Draw pile, drawn from the back; the face-up trump card sits at
    /// index 0 so it is drawn last.
    deck: Vec<Card>,
    hands: [Vec<Card>; 2],
    leader: PlayerId,
    /// Card led this trick, if the reply is pending.
    lead: Option<Card>,
    points: [u32; 2],
    tricks_played: u32,
    forfeited: Option<PlayerId>,
}

impl BriscolaState {
    pub fn new(seed: u64) -> Self {
        let mut deck: Vec<Card> = (0..4)
            .flat_map(|suit| (0..10).map(move |rank| Card { suit, rank }))
            .collect();
        deck.shuffle(&mut stream_rng(seed, &[tags::SHUFFLE]));
        let hand0: Vec<Card> = deck.drain(..3).collect();
        let hand1: Vec<Card> = deck.drain(..3).collect();
        let trump_card = deck[0];
        BriscolaState {
            seed,
            trump: trump_card.suit,
            trump_card,
            deck,
            hands: [hand0, hand1],
            leader: PlayerId::P0,
            lead: None,
            points: [0, 0],
            tricks_played: 0,
            forfeited: None,
        }
    }

    fn draw_to(&mut self, player: PlayerId) {
        if let Some(card) = self.deck.pop() {
            self.hands[player.index()].push(card);
        }
    }

    fn resolve_trick(&mut self, lead: Card, reply: Card) {
        let winner = if reply_wins(lead, reply, self.trump) {
            self.leader.opponent()
        } else {
            self.leader
        };
        self.points[winner.index()] += lead.points() + reply.points();
        self.tricks_played += 1;
        self.draw_to(winner);
        self.draw_to(winner.opponent());
        self.leader = winner;
        self.lead = None;
    }

    fn card_line(&self, idx: usize, card: Card) -> String {
        let trump_tag = if card.suit == self.trump {
            " (TRUMP)"
        } else {
            ""
        };
        format!(
            "  {}. {} [{} pts]{}",
            idx + 1,
            card.label(),
            card.points(),
            trump_tag
        )
    }
}

impl GameState for BriscolaState {
    fn game_id(&self) -> &'static str {
        "briscola"
    }

    fn is_terminal(&self) -> bool {
        self.forfeited.is_some() || (self.hands[0].is_empty() && self.hands[1].is_empty())
    }

    fn player_to_act(&self) -> PlayerId {
        if self.lead.is_some() {
            self.leader.opponent()
        } else {
            self.leader
        }
    }

    fn legal_actions(&self) -> Vec<String> {
        let hand = &self.hands[self.player_to_act().index()];
        (1..=hand.len()).map(|i| format!("[play {i}]")).collect()
    }

    fn validate(&self, token: &str) -> bool {
        !self.is_terminal() && self.legal_actions().iter().any(|t| t == token)
    }

    fn observe(&self, player: PlayerId) -> String {
        let mut out = String::new();
        out.push_str(&format!("You are playing Briscola - Player {player}.\n"));
        out.push_str(
            "Goal: Win tricks and collect the most points (120 total points in the deck).\n",
        );
        out.push_str("Card Points: A=11, 3=10, K=4, Q=3, J=2, others=0\n");
        out.push_str("Card Power: A > 3 > K > Q > J > 7 > 6 > 5 > 4 > 2\n");
        out.push_str("Trump cards beat non-trump cards regardless of power.\n\n");
        out.push_str(ACTION_FORMAT);
        out.push_str("\n\n");
        out.push_str(&format!(
            " Briscola game started! Trump suit: {} (Trump card: {})\n",
            SUITS[self.trump as usize],
            self.trump_card.label()
        ));
        out.push_str(" Your hand:\n");
        for (i, &card) in self.hands[player.index()].iter().enumerate() {
            out.push_str(&self.card_line(i, card));
            out.push('\n');
        }
        out.push('\n');
        match self.lead {
            Some(card) => out.push_str(&format!(
                "Opponent played: {} [{} pts]\n",
                card.label(),
                card.points()
            )),
            None => out.push_str("No cards played yet this trick.\n"),
        }
        out.push('\n');
        out.push_str(&format!(
            "Scores: Player 0: {} pts | Player 1: {} pts\n",
            self.points[0], self.points[1]
        ));
        out.push_str(&format!(
            "Trump suit: {} | Cards left in deck: {}\n\n",
            SUITS[self.trump as usize],
            self.deck.len()
        ));
        out.push_str("Play a card using [play X]\n");
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
        let pos: usize = token
            .strip_prefix("[play ")
            .and_then(|t| t.strip_suffix(']'))
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| GameError::IllegalAction(token.to_string()))?;
        let actor = self.player_to_act();
        let card = self.hands[actor.index()].remove(pos - 1);
        match self.lead {
            None => self.lead = Some(card),
            Some(lead) => self.resolve_trick(lead, card),
        }
        Ok(())
    }

    fn forfeit(&mut self, loser: PlayerId) {
        self.forfeited = Some(loser);
    }

    fn outcome(&self) -> Option<Outcome> {
        if let Some(loser) = self.forfeited {
            return Some(Outcome::forfeit_by(loser));
        }
        if !self.is_terminal() {
            return None;
        }
        Some(Outcome(
            (self.points[0] as i64 - self.points[1] as i64).signum() as i8,
        ))
    }

    fn canonical(&self) -> String {
        let fmt_hand = |h: &[Card]| {
            h.iter()
                .map(|c| c.label())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "briscola|seed={}|trump={}|deck={}|h0={}|h1={}|leader={}|lead={:?}|pts={:?}|tricks={}|forfeit={:?}",
            self.seed,
            self.trump_card.label(),
            fmt_hand(&self.deck),
            fmt_hand(&self.hands[0]),
            fmt_hand(&self.hands[1]),
            self.leader,
            self.lead.map(|c| c.label()),
            self.points,
            self.tricks_played,
            self.forfeited
        )
    }

    fn boxed_clone(&self) -> Box<dyn GameState> {
        Box::new(self.clone())
    }
}
