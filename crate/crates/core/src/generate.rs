//! Seeded random congestion games.

use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::game::{CongestionGame, GameError, PolynomialCost};

const ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generator parameters: {0}")]
    Params(String),
    #[error("could not draw a game meeting k <= {0} in {ATTEMPTS} attempts")]
    KTarget(usize),
    #[error("bad generator spec `{0}`")]
    Syntax(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub players: usize,
    pub edges: usize,
    /// Paths per player.
    pub paths: usize,
    /// Longest path; defaults to `min(edges, 3)`.
    pub max_len: Option<usize>,
    /// Cap on `k`.
    pub k_target: Option<usize>,
    /// Cost degree, 1 to 3.
    pub degree: usize,
    pub symmetric: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            players: 2,
            edges: 4,
            paths: 2,
            max_len: None,
            k_target: None,
            degree: 3,
            symmetric: false,
        }
    }
}

impl GenParams {
    fn path_len_cap(&self) -> usize {
        self.max_len.unwrap_or(self.edges.min(3))
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let fail = |msg: String| Err(GenerateError::Params(msg));
        if self.players == 0 {
            return fail("n must be at least 1".into());
        }
        if self.edges == 0 {
            return fail("m must be at least 1".into());
        }
        if self.paths == 0 {
            return fail("d must be at least 1".into());
        }
        if !(1..=3).contains(&self.degree) {
            return fail(format!("deg = {} outside 1..=3", self.degree));
        }
        let len = self.path_len_cap();
        if len == 0 || len > self.edges {
            return fail(format!("path length {len} exceeds m = {}", self.edges));
        }
        // distinct nonempty subsets of size <= len
        let mut available = 0u128;
        let mut binom = 1u128;
        for j in 1..=len {
            binom = binom * (self.edges + 1 - j) as u128 / j as u128;
            available += binom;
        }
        if (self.paths as u128) > available {
            return fail(format!(
                "d = {} exceeds the {available} distinct paths of length <= {len}",
                self.paths
            ));
        }
        if self.k_target == Some(0) {
            return fail("k must be at least 1".into());
        }
        Ok(())
    }
}

/// Parses `n=..,m=..,d=..,deg=..,sym=..` with optional `len=..` and `k=..`.
impl FromStr for GenParams {
    type Err = GenerateError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let mut params = GenParams::default();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| GenerateError::Syntax(item.to_string()))?;
            let bad = || GenerateError::Syntax(item.to_string());
            let int = || value.trim().parse::<usize>().map_err(|_| bad());
            match key.trim() {
                "n" => params.players = int()?,
                "m" => params.edges = int()?,
                "d" => params.paths = int()?,
                "deg" => params.degree = int()?,
                "len" => params.max_len = Some(int()?),
                "k" => params.k_target = Some(int()?),
                "sym" => {
                    params.symmetric = match value.trim() {
                        "1" | "true" | "yes" => true,
                        "0" | "false" | "no" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(bad()),
            }
        }
        Ok(params)
    }
}

/// Draws a cost of exactly the given degree with `coef_1 > 0` and
/// `c(1) <= 1`.
pub fn random_cost<R: Rng>(rng: &mut R, degree: usize) -> PolynomialCost {
    let mut coeffs: Vec<f64> = (0..degree)
        .map(|j| {
            if j == 0 {
                rng.gen_range(0.1..=1.0)
            } else {
                rng.gen_range(0.0..=1.0)
            }
        })
        .collect();
    let total: f64 = coeffs.iter().sum();
    let scale = rng.gen_range(0.5..=1.0) / total;
    coeffs.iter_mut().for_each(|c| *c *= scale);
    PolynomialCost::new(&coeffs).expect("rescaled cost satisfies the bounds")
}

fn random_path_list<R: Rng>(rng: &mut R, params: &GenParams) -> Vec<Vec<usize>> {
    let len = params.path_len_cap();
    let mut list: Vec<Vec<usize>> = Vec::with_capacity(params.paths);
    while list.len() < params.paths {
        let size = rng.gen_range(1..=len);
        let mut path = index::sample(rng, params.edges, size).into_vec();
        path.sort_unstable();
        if !list.contains(&path) {
            list.push(path);
        }
    }
    list
}

/// Deterministic in `seed`.
pub fn generate_random_game(
    seed: u64,
    params: &GenParams,
) -> Result<CongestionGame, GenerateError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<PolynomialCost> = (0..params.edges)
        .map(|_| random_cost(&mut rng, params.degree))
        .collect();
    for _ in 0..ATTEMPTS {
        let paths = if params.symmetric {
            vec![random_path_list(&mut rng, params); params.players]
        } else {
            (0..params.players)
                .map(|_| random_path_list(&mut rng, params))
                .collect()
        };
        let game = CongestionGame::new(params.players, edges.clone(), paths)?;
        if params.k_target.is_none_or(|k| game.k() <= k) {
            return Ok(game);
        }
    }
    Err(GenerateError::KTarget(params.k_target.unwrap_or(0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_game() {
        let params: GenParams = "n=3,m=5,d=3,deg=3".parse().unwrap();
        assert_eq!(
            generate_random_game(7, &params).unwrap(),
            generate_random_game(7, &params).unwrap()
        );
        assert_ne!(
            generate_random_game(7, &params).unwrap(),
            generate_random_game(8, &params).unwrap()
        );
    }

    #[test]
    fn symmetric_flag() {
        let params: GenParams = "n=4,m=6,d=3,deg=2,sym=1".parse().unwrap();
        let game = generate_random_game(1, &params).unwrap();
        assert!(game.is_symmetric());
        assert!(game.all_paths().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn infeasible_params() {
        let long = GenParams {
            edges: 2,
            max_len: Some(3),
            ..GenParams::default()
        };
        assert!(matches!(
            generate_random_game(0, &long),
            Err(GenerateError::Params(_))
        ));
        let crowded: GenParams = "m=2,d=4".parse().unwrap();
        assert!(matches!(
            generate_random_game(0, &crowded),
            Err(GenerateError::Params(_))
        ));
        assert!(matches!(
            "n=2,q=1".parse::<GenParams>(),
            Err(GenerateError::Syntax(_))
        ));
    }

    #[test]
    fn k_target_is_met() {
        let params: GenParams = "n=2,m=8,d=3,k=1,len=2".parse().unwrap();
        let game = generate_random_game(3, &params).unwrap();
        assert_eq!(game.k(), 1);
    }

    #[test]
    fn every_drawn_cost_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for deg in 1..=3 {
            for _ in 0..100 {
                let c = random_cost(&mut rng, deg);
                assert_eq!(c.polynomial().degree(), deg);
                assert!(c.eval(1.0) <= 1.0);
            }
        }
    }
}
