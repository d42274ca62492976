//! Skill ratings, conservative scoring, and stability statistics.
//!
//! Ratings follow the two-player TrueSkill moment-matching update with the
//! system's published defaults (mu 25, sigma 25/3, beta 25/6, tau 25/300,
//! draw probability 0.10). Selection uses the lower confidence bound
//! mu - kappa * sigma. Stability statistics are the relative standard
//! error of run-level performance and Kendall's tau-b over rankings.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("non-finite rating input")]
    NonFinite,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("relative standard error undefined for non-positive mean")]
    NonPositiveMean,
    #[error("rankings differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("tau-b undefined: a ranking is entirely tied")]
    AllTied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillRating {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for SkillRating {
    fn default() -> Self {
        SkillRating {
            mu: 25.0,
            sigma: 25.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueSkillConfig {
    pub mu0: f64,
    pub sigma0: f64,
    /// Performance noise.
    pub beta: f64,
    /// Dynamics noise added to sigma^2 before every update.
    pub tau: f64,
    pub draw_probability: f64,
}

impl Default for TrueSkillConfig {
    fn default() -> Self {
        TrueSkillConfig {
            mu0: 25.0,
            sigma0: 25.0 / 3.0,
            beta: 25.0 / 6.0,
            tau: 25.0 / 300.0,
            draw_probability: 0.10,
        }
    }
}

impl TrueSkillConfig {
    pub fn initial(&self) -> SkillRating {
        SkillRating {
            mu: self.mu0,
            sigma: self.sigma0,
        }
    }

    /// Draw margin on the performance scale, from the draw probability.
    pub fn draw_margin(&self) -> f64 {
        inverse_normal_cdf((1.0 + self.draw_probability) / 2.0)
            * std::f64::consts::SQRT_2
            * self.beta
    }
}

/// One rated pairing; outcome is from `context_a`'s perspective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub context_a: String,
    pub context_b: String,
    pub outcome: i8,
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn inverse_normal_cdf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Truncation correction for a win: mean shift of a Gaussian conditioned
/// on exceeding the margin. `x` is the margin-adjusted mean t - eps.
fn v_win(x: f64) -> f64 {
    let denom = normal_cdf(x);
    if denom < 1e-300 {
        // Asymptotic form: the truncated mass concentrates at the margin.
        -x
    } else {
        normal_pdf(x) / denom
    }
}

fn w_win(x: f64) -> f64 {
    let v = v_win(x);
    v * (v + x)
}

/// Truncation corrections for a draw (performance difference within the
/// margin). `t` is the mean difference, `eps` the scaled margin.
fn v_draw(t: f64, eps: f64) -> f64 {
    let denom = normal_cdf(eps - t) - normal_cdf(-eps - t);
    if denom < 1e-300 {
        if t < 0.0 {
            -t - eps
        } else {
            -t + eps
        }
    } else {
        (normal_pdf(-eps - t) - normal_pdf(eps - t)) / denom
    }
}

fn w_draw(t: f64, eps: f64) -> f64 {
    let denom = normal_cdf(eps - t) - normal_cdf(-eps - t);
    if denom < 1e-300 {
        return 1.0;
    }
    let v = v_draw(t, eps);
    v * v + ((eps - t) * normal_pdf(eps - t) + (eps + t) * normal_pdf(eps + t)) / denom
}

/// Two-player update. For `draw = false` the first argument is the winner.
/// Returns the posterior (winner, loser) ratings.
pub fn trueskill_update(
    winner: SkillRating,
    loser: SkillRating,
    draw: bool,
    config: &TrueSkillConfig,
) -> Result<(SkillRating, SkillRating), RatingError> {
    for r in [&winner, &loser] {
        if !r.mu.is_finite() || !r.sigma.is_finite() || r.sigma <= 0.0 {
            return Err(RatingError::NonFinite);
        }
    }
    let var_w = winner.sigma * winner.sigma + config.tau * config.tau;
    let var_l = loser.sigma * loser.sigma + config.tau * config.tau;
    let c2 = var_w + var_l + 2.0 * config.beta * config.beta;
    let c = c2.sqrt();
    let t = (winner.mu - loser.mu) / c;
    let eps = config.draw_margin() / c;
    let (v, w) = if draw {
        (v_draw(t, eps), w_draw(t, eps))
    } else {
        (v_win(t - eps), w_win(t - eps))
    };
    let new_winner = SkillRating {
        mu: winner.mu + var_w / c * v,
        sigma: (var_w * (1.0 - var_w / c2 * w)).sqrt(),
    };
    let new_loser = SkillRating {
        mu: loser.mu - var_l / c * v,
        sigma: (var_l * (1.0 - var_l / c2 * w)).sqrt(),
    };
    Ok((new_winner, new_loser))
}

/// Lower confidence bound mu - kappa * sigma.
pub fn lcb_score(r: SkillRating, kappa: f64) -> f64 {
    r.mu - kappa * r.sigma
}

/// Relative standard error in percent: 100 * s / (mean * sqrt(n)), with
/// the sample standard deviation (n - 1 denominator).
pub fn rse(values: &[f64]) -> Result<f64, RatingError> {
    let n = values.len();
    if n < 2 {
        return Err(RatingError::TooFewValues { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(RatingError::NonPositiveMean);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    Ok(100.0 * var.sqrt() / (mean * (n as f64).sqrt()))
}

/// Kendall's tau-b with tie corrections.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64, RatingError> {
    if a.len() != b.len() {
        return Err(RatingError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(RatingError::TooFewValues {
            needed: 2,
            got: a.len(),
        });
    }
    let (mut nc, mut nd, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            match (da == 0.0, db == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) => {
                    if da * db > 0.0 {
                        nc += 1;
                    } else {
                        nd += 1;
                    }
                }
            }
        }
    }
    let denom = (((nc + nd + tx) as f64) * ((nc + nd + ty) as f64)).sqrt();
    if denom == 0.0 {
        return Err(RatingError::AllTied);
    }
    Ok((nc - nd) as f64 / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub id: String,
    pub mu: f64,
    pub sigma: f64,
    pub lcb: f64,
    pub games: u32,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RatingTable {
    entries: BTreeMap<String, (SkillRating, u32)>,
}

impl RatingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, rating: SkillRating) {
        self.entries.insert(id.into(), (rating, 0));
    }

    pub fn get(&self, id: &str) -> Option<SkillRating> {
        self.entries.get(id).map(|(r, _)| *r)
    }

    pub fn games(&self, id: &str) -> u32 {
        self.entries.get(id).map(|(_, g)| *g).unwrap_or(0)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Ingest one match; unknown contexts start at the prior.
    pub fn record(
        &mut self,
        result: &MatchResult,
        config: &TrueSkillConfig,
    ) -> Result<(), RatingError> {
        let a = self
            .entries
            .get(&result.context_a)
            .map(|(r, _)| *r)
            .unwrap_or_else(|| config.initial());
        let b = self
            .entries
            .get(&result.context_b)
            .map(|(r, _)| *r)
            .unwrap_or_else(|| config.initial());
        let (new_a, new_b) = match result.outcome {
            1 => trueskill_update(a, b, false, config)?,
            -1 => {
                let (nb, na) = trueskill_update(b, a, false, config)?;
                (na, nb)
            }
            _ => trueskill_update(a, b, true, config)?,
        };
        let games_a = self.games(&result.context_a) + 1;
        let games_b = self.games(&result.context_b) + 1;
        self.entries
            .insert(result.context_a.clone(), (new_a, games_a));
        self.entries
            .insert(result.context_b.clone(), (new_b, games_b));
        Ok(())
    }

    /// Rows sorted descending by LCB; ties broken by lower sigma, then id.
    pub fn leaderboard(&self, kappa: f64) -> Vec<LeaderboardRow> {
        let mut rows: Vec<LeaderboardRow> = self
            .entries
            .iter()
            .map(|(id, (r, games))| LeaderboardRow {
                id: id.clone(),
                mu: r.mu,
                sigma: r.sigma,
                lcb: lcb_score(*r, kappa),
                games: *games,
            })
            .collect();
        rows.sort_by(|x, y| {
            y.lcb
                .partial_cmp(&x.lcb)
                .unwrap()
                .then(x.sigma.partial_cmp(&y.sigma).unwrap())
                .then(x.id.cmp(&y.id))
        });
        rows
    }
}

/// Plain-text leaderboard table with fixed columns.
pub fn render_leaderboard(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from(
        "rank  id                                mu        sigma     lcb       games\n",
    );
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{:<5} {:<33} {:<9.4} {:<9.4} {:<9.4} {}\n",
            i + 1,
            row.id,
            row.mu,
            row.sigma,
            row.lcb,
            row.games
        ));
    }
    out
}

/// Numeric matrix rendering (rows of space-separated values), for the
/// pairwise tau-b heatmap export.
pub fn render_matrix(matrix: &[Vec<f64>]) -> String {
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}
