//! Line-oriented game files.
//!
//! ```text
//! # two parallel links
//! players 1
//! edge 0 poly 0.5
//! edge 1 poly 1
//! path 0 0
//! path 0 1
//! ```
//!
//! `edge <id> poly <c1> <c2> ...` gives the coefficients of `y, y^2, ...`;
//! `path <player> <edge ids>` appends one path for a player. Edge ids are
//! arbitrary unsigned integers and are renumbered in declaration order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::game::{CongestionGame, GameError, PolynomialCost};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: edge {id}: {source}")]
    Cost {
        line: usize,
        id: u64,
        source: crate::game::CostViolation,
    },
    #[error("missing `players` header")]
    NoHeader,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub fn parse_game_str(text: &str) -> Result<CongestionGame, FormatError> {
    let mut players: Option<usize> = None;
    let mut edges: Vec<PolynomialCost> = Vec::new();
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut paths: Vec<Vec<Vec<usize>>> = Vec::new();

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| FormatError::Syntax { line, message };
        let mut tokens = content.split_whitespace();
        let keyword = tokens.next().unwrap_or_default();
        let rest: Vec<&str> = tokens.collect();
        match keyword {
            "players" => {
                if players.is_some() {
                    return Err(err("duplicate `players` header".into()));
                }
                let [count] = rest[..] else {
                    return Err(err("expected `players <n>`".into()));
                };
                let n: usize = count
                    .parse()
                    .map_err(|_| err(format!("bad player count `{count}`")))?;
                if n == 0 {
                    return Err(err("game has no players".into()));
                }
                players = Some(n);
                paths = vec![Vec::new(); n];
            }
            "edge" => {
                if rest.len() < 3 || rest[1] != "poly" {
                    return Err(err("expected `edge <id> poly <c1> <c2> ...`".into()));
                }
                let id: u64 = rest[0]
                    .parse()
                    .map_err(|_| err(format!("bad edge id `{}`", rest[0])))?;
                if ids.contains_key(&id) {
                    return Err(err(format!("edge {id} declared twice")));
                }
                let coeffs: Vec<f64> = rest[2..]
                    .iter()
                    .map(|c| c.parse().map_err(|_| err(format!("bad coefficient `{c}`"))))
                    .collect::<Result<_, _>>()?;
                let cost = PolynomialCost::new(&coeffs).map_err(|source| FormatError::Cost {
                    line,
                    id,
                    source,
                })?;
                ids.insert(id, edges.len());
                edges.push(cost);
            }
            "path" => {
                let Some(n) = players else {
                    return Err(err("`path` before `players` header".into()));
                };
                let Some((player, list)) = rest.split_first() else {
                    return Err(err("expected `path <player> <edge ids>`".into()));
                };
                let player: usize = player
                    .parse()
                    .map_err(|_| err(format!("bad player index `{player}`")))?;
                if player >= n {
                    return Err(err(format!("player {player} out of range for {n} players")));
                }
                if list.is_empty() {
                    return Err(err("path has no edges".into()));
                }
                let path: Vec<usize> = list
                    .iter()
                    .map(|t| {
                        let id: u64 = t.parse().map_err(|_| err(format!("bad edge id `{t}`")))?;
                        ids.get(&id)
                            .copied()
                            .ok_or_else(|| err(format!("unknown edge {id}")))
                    })
                    .collect::<Result<_, _>>()?;
                paths[player].push(path);
            }
            other => return Err(err(format!("unknown keyword `{other}`"))),
        }
    }
    let n = players.ok_or(FormatError::NoHeader)?;
    Ok(CongestionGame::new(n, edges, paths)?)
}

pub fn parse_game(path: impl AsRef<Path>) -> Result<CongestionGame, FormatError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_game_str(&text)
}

/// Inverse of [`parse_game_str`]; coefficients are printed exactly.
pub fn render_game(game: &CongestionGame) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "players {}", game.players());
    for (id, cost) in game.edges().iter().enumerate() {
        let _ = write!(out, "edge {id} poly");
        for c in cost.coefficients() {
            let _ = write!(out, " {c:?}");
        }
        out.push('\n');
    }
    for i in 0..game.players() {
        for path in game.paths(i) {
            let _ = write!(out, "path {i}");
            for e in path {
                let _ = write!(out, " {e}");
            }
            out.push('\n');
        }
    }
    out
}
