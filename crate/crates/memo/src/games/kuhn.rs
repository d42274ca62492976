//! Three-round Kuhn Poker.
//!
//! Each round both players ante 1 chip and receive one of J, Q, K (dealt
//! without replacement from a per-round stream). Betting lines per round:
//! check-check, bet-call, bet-fold, check-bet-call, check-bet-fold. The
//! first actor alternates each round to remove positional bias. Whoever has
//! more chips after 3 rounds wins the game.

use rand::RngCore;

use crate::game::rng::{stream_rng, tags};
use crate::game::{GameError, GameState, Outcome, PlayerId};

pub const ACTION_FORMAT: &str = "Action Rules:\n\
- '[check]': Pass without betting (only if no bet is on the table)\n\
- '[bet]': Add 1 chip to the pot (only if no bet is on the table)\n\
- '[call]': Match an opponent's bet by adding 1 chip to the pot\n\
- '[fold]': Surrender your hand and let your opponent win the pot";

const ROUNDS: u8 = 3;
const CARD_NAMES: [char; 3] = ['J', 'Q', 'K'];

#[derive(Debug, Clone)]
pub struct KuhnState {
    seed: u64,
    /// 0-based; round r's first actor is player r mod 2.
    round: u8,
    /// Cards for the current round, indexed by player. 0=J, 1=Q, 2=K.
    cards: [u8; 2],
    /// Net chips won or lost so far, per player (antes already deducted).
    chips: [i32; 2],
    pot: i32,
    /// Betting tokens played this round, in order.
    history: Vec<String>,
    forfeited: Option<PlayerId>,
    terminal: bool,
}

impl KuhnState {
    pub fn new(seed: u64) -> Self {
        let mut state = KuhnState {
            seed,
            round: 0,
            cards: [0; 2],
            chips: [0; 2],
            pot: 0,
            history: Vec::new(),
            forfeited: None,
            terminal: false,
        };
        state.deal();
        state
    }

    fn deal(&mut self) {
        let mut rng = stream_rng(self.seed, &[tags::DEAL, self.round as u64]);
        let first = (rng.next_u64() % 3) as u8;
        let mut rest: Vec<u8> = (0..3).filter(|&c| c != first).collect();
        let second = rest.remove((rng.next_u64() % 2) as usize);
        self.cards = [first, second];
        self.chips[0] -= 1;
        self.chips[1] -= 1;
        self.pot = 2;
    }

    fn first_actor(&self) -> PlayerId {
        PlayerId(self.round % 2)
    }

    fn bettor(&self) -> Option<PlayerId> {
        let pos = self.history.iter().position(|t| t == "[bet]")?;
        Some(if pos % 2 == 0 {
            self.first_actor()
        } else {
            self.first_actor().opponent()
        })
    }

    fn showdown_winner(&self) -> PlayerId {
        if self.cards[0] > self.cards[1] {
            PlayerId::P0
        } else {
            PlayerId::P1
        }
    }

    fn resolve_round(&mut self, winner: PlayerId) {
        self.chips[winner.index()] += self.pot;
        self.pot = 0;
        self.history.clear();
        self.round += 1;
        if self.round == ROUNDS {
            self.terminal = true;
        } else {
            self.deal();
        }
    }
}

impl GameState for KuhnState {
    fn game_id(&self) -> &'static str {
        "kuhn_poker"
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn player_to_act(&self) -> PlayerId {
        if self.history.len() % 2 == 0 {
            self.first_actor()
        } else {
            self.first_actor().opponent()
        }
    }

    fn legal_actions(&self) -> Vec<String> {
        if self.history.last().map(String::as_str) == Some("[bet]") {
            vec!["[fold]".into(), "[call]".into()]
        } else {
            vec!["[check]".into(), "[bet]".into()]
        }
    }

    fn validate(&self, token: &str) -> bool {
        !self.terminal && self.legal_actions().iter().any(|t| t == token)
    }

    fn observe(&self, player: PlayerId) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "You are Player {player} in a 3 round game of Kuhn Poker.\n"
        ));
        out.push_str("Game Rules:\n");
        out.push_str("- Kuhn Poker uses a 3-card deck with J, Q, K (J lowest, K highest)\n");
        out.push_str(
            "- Each player antes 1 chip and receives 1 card each round \
             (note that the cards are dealt without replacement, so you cannot \
             have the same card as your opponent).\n",
        );
        out.push_str("- Game continues for 3 rounds\n");
        out.push_str("- The player with the most chips after all rounds wins\n");
        out.push_str(ACTION_FORMAT);
        out.push('\n');
        if self.round > 0 {
            out.push_str(&format!(
                "Current chips: Player 0: {} | Player 1: {}\n",
                self.chips[0], self.chips[1]
            ));
        }
        out.push_str(&format!(
            "### Starting round {} out of 3 rounds. Your card is: '{}'\n",
            self.round + 1,
            CARD_NAMES[self.cards[player.index()] as usize]
        ));
        let mut actor = self.first_actor();
        for token in &self.history {
            out.push_str(&format!("Player {actor}, submitted move: '{token}'.\n"));
            actor = actor.opponent();
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
        let actor = self.player_to_act();
        match token {
            "[bet]" => {
                self.chips[actor.index()] -= 1;
                self.pot += 1;
                self.history.push(token.to_string());
            }
            "[call]" => {
                self.chips[actor.index()] -= 1;
                self.pot += 1;
                self.resolve_round(self.showdown_winner());
            }
            "[fold]" => {
                let bettor = self.bettor().expect("fold is only legal facing a bet");
                self.resolve_round(bettor);
            }
            "[check]" => {
                self.history.push(token.to_string());
                if self.history.len() == 2 && self.history.iter().all(|t| t == "[check]") {
                    self.resolve_round(self.showdown_winner());
                }
            }
            _ => unreachable!("validated above"),
        }
        Ok(())
    }

    fn forfeit(&mut self, loser: PlayerId) {
        self.forfeited = Some(loser);
        self.terminal = true;
    }

    fn outcome(&self) -> Option<Outcome> {
        if !self.terminal {
            return None;
        }
        if let Some(loser) = self.forfeited {
            return Some(Outcome::forfeit_by(loser));
        }
        Some(Outcome((self.chips[0] - self.chips[1]).signum() as i8))
    }

    fn canonical(&self) -> String {
        format!(
            "kuhn_poker|seed={}|round={}|cards={:?}|chips={:?}|pot={}|hist={:?}|forfeit={:?}|term={}",
            self.seed, self.round, self.cards, self.chips, self.pot, self.history,
            self.forfeited, self.terminal
        )
    }

    fn boxed_clone(&self) -> Box<dyn GameState> {
        Box::new(self.clone())
    }
}
