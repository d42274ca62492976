//! SimpleTak on a 4x4 board.
//!
//! Players alternately place a stone on an empty cell (indices 0-15).
//! A player wins the moment their stones form a 4-connected path joining
//! two opposite edges (top-to-bottom or left-to-right). A full board with
//! no connection is a draw.

use crate::game::{GameError, GameState, Outcome, PlayerId};

pub const ACTION_FORMAT: &str = "On your turn, choose one empty cell (by its numbered index) \
and place your stone there.\nFor example, '[12]' places your stone in cell 12.";

const SIDE: usize = 4;
const CELLS: usize = SIDE * SIDE;
const MARKS: [char; 2] = ['O', 'X'];

/// True iff `cells` (a 16-element occupancy mask) contains a 4-connected
/// path between two opposite board edges.
pub fn connects(cells: &[bool; CELLS]) -> bool {
    let neighbors = |i: usize| {
        let (r, c) = (i / SIDE, i % SIDE);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(i - SIDE);
        }
        if r + 1 < SIDE {
            out.push(i + SIDE);
        }
        if c > 0 {
            out.push(i - 1);
        }
        if c + 1 < SIDE {
            out.push(i + 1);
        }
        out
    };
    // DFS from one edge, check arrival at the opposite edge.
    let reaches = |starts: Vec<usize>, goal: &dyn Fn(usize) -> bool| {
        let mut seen = [false; CELLS];
        let mut stack: Vec<usize> = starts.into_iter().filter(|&i| cells[i]).collect();
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(i) = stack.pop() {
            if goal(i) {
                return true;
            }
            for n in neighbors(i) {
                if cells[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        false
    };
    reaches((0..SIDE).collect(), &|i| i / SIDE == SIDE - 1)
        || reaches((0..SIDE).map(|r| r * SIDE).collect(), &|i| i % SIDE == SIDE - 1)
}

#[derive(Debug, Clone)]
pub struct TakState {
    grid: [Option<PlayerId>; CELLS],
    mover: PlayerId,
    winner: Option<PlayerId>,
    forfeited: Option<PlayerId>,
}

impl TakState {
    /// The seed is accepted for registry uniformity; the game has no
    /// chance events.
    pub fn new(_seed: u64) -> Self {
        TakState {
            grid: [None; CELLS],
            mover: PlayerId::P0,
            winner: None,
            forfeited: None,
        }
    }

    fn mask(&self, player: PlayerId) -> [bool; CELLS] {
        let mut out = [false; CELLS];
        for (i, &cell) in self.grid.iter().enumerate() {
            out[i] = cell == Some(player);
        }
        out
    }

    fn board_text(&self, viewer: PlayerId) -> String {
        let mut out = String::new();
        for row in 0..SIDE {
            out.push_str("+----+----+----+----+\n");
            for col in 0..SIDE {
                let i = row * SIDE + col;
                let label = match self.grid[i] {
                    Some(p) if p == viewer => MARKS[0].to_string(),
                    Some(_) => MARKS[1].to_string(),
                    None => i.to_string(),
                };
                out.push_str(&format!("| {label:<2} "));
            }
            out.push_str("|\n");
        }
        out.push_str("+----+----+----+----+");
        out
    }
}

impl GameState for TakState {
    fn game_id(&self) -> &'static str {
        "simpletak"
    }

    fn is_terminal(&self) -> bool {
        self.winner.is_some()
            || self.forfeited.is_some()
            || self.grid.iter().all(|c| c.is_some())
    }

    fn player_to_act(&self) -> PlayerId {
        self.mover
    }

    fn legal_actions(&self) -> Vec<String> {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(i, _)| format!("[{i}]"))
            .collect()
    }

    fn validate(&self, token: &str) -> bool {
        !self.is_terminal() && self.legal_actions().iter().any(|t| t == token)
    }

    fn observe(&self, player: PlayerId) -> String {
        let mut out = String::new();
        out.push_str(&format!("You are Player {player} in SimpleTak.\n"));
        out.push_str(
            "On the board, your stones appear as 'O' and your opponent's stones appear as 'X'.\n\n",
        );
        out.push_str(ACTION_FORMAT);
        out.push_str("\n\n");
        out.push_str(
            "Your objective is to form a continuous path of your stones that connects two \
             opposite edges of the board (top-to-bottom or left-to-right).\n\n",
        );
        out.push_str("Current Board:\n\n");
        out.push_str(&self.board_text(player));
        out.push('\n');
        out.push_str(&format!(
            "Available Moves: {}",
            self.legal_actions().join(", ")
        ));
        out
    }

    fn apply(&mut self, token: &str) -> Result<(), GameError> {
        if !self.validate(token) {
            return Err(GameError::IllegalAction(token.to_string()));
        }
        let idx: usize = token[1..token.len() - 1]
            .parse()
            .map_err(|_| GameError::IllegalAction(token.to_string()))?;
        self.grid[idx] = Some(self.mover);
        if connects(&self.mask(self.mover)) {
            self.winner = Some(self.mover);
        }
        self.mover = self.mover.opponent();
        Ok(())
    }

    fn forfeit(&mut self, loser: PlayerId) {
        self.forfeited = Some(loser);
    }

    fn outcome(&self) -> Option<Outcome> {
        if let Some(loser) = self.forfeited {
            return Some(Outcome::forfeit_by(loser));
        }
        match self.winner {
            Some(PlayerId::P0) => Some(Outcome::P0_WIN),
            Some(_) => Some(Outcome::P1_WIN),
            None if self.grid.iter().all(|c| c.is_some()) => Some(Outcome::DRAW),
            None => None,
        }
    }

    fn canonical(&self) -> String {
        let cells: String = self
            .grid
            .iter()
            .map(|c| match c {
                Some(PlayerId(0)) => 'O',
                Some(_) => 'X',
                None => '.',
            })
            .collect();
        format!(
            "simpletak|grid={}|mover={}|winner={:?}|forfeit={:?}",
            cells, self.mover, self.winner, self.forfeited
        )
    }

    fn boxed_clone(&self) -> Box<dyn GameState> {
        Box::new(self.clone())
    }
}
