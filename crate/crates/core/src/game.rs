//! Congestion games with polynomial edge costs.
//!
//! A game has `n` players, each routing a load of `1/n` over a private list
//! of allowed paths. A path is an arbitrary nonempty set of edges; there is no
//! underlying graph. Strategies are aggregated flows (nonatomic view) or,
//! equivalently, scaled mixed strategies (atomic view): `x_{i,s} = pi_{i,s}/n`.

use thiserror::Error;

use crate::poly::Polynomial;

/// Absolute tolerance on simplex sums of a [`FlowProfile`].
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Grid resolution used when double-checking the linear envelope of a cost.
const ENVELOPE_GRID: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostViolation {
    #[error("cost polynomial has no coefficients")]
    Empty,
    #[error("coefficient of y^{power} is not finite")]
    NonFinite { power: usize },
    #[error("c(0) = {0} but costs must vanish at zero")]
    NonzeroConstant(f64),
    #[error("coefficient of y^{power} is negative ({value})")]
    NegativeCoefficient { power: usize, value: f64 },
    #[error("c(1) = {0} exceeds 1")]
    ExceedsUnitAtOne(f64),
    #[error("c'(0) = 0 violates c' >= A > 0")]
    FlatAtOrigin,
    #[error("linear envelope {a} y <= c(y) <= {b} y fails at y = {y}")]
    EnvelopeViolated { a: f64, b: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("game has no players")]
    NoPlayers,
    #[error("game has no edges")]
    NoEdges,
    #[error("expected path lists for {expected} players, found {found}")]
    PlayerCountMismatch { expected: usize, found: usize },
    #[error("player {player} has no paths")]
    NoPaths { player: usize },
    #[error("path {path} of player {player} is empty")]
    EmptyPath { player: usize, path: usize },
    #[error("path {path} of player {player} references unknown edge {edge}")]
    UnknownEdge {
        player: usize,
        path: usize,
        edge: usize,
    },
    #[error("path {path} of player {player} lists edge {edge} twice")]
    DuplicateEdge {
        player: usize,
        path: usize,
        edge: usize,
    },
    #[error("edge {edge}: {violation}")]
    InvalidCost {
        edge: usize,
        violation: CostViolation,
    },
    #[error("player {player} is out of range")]
    PlayerOutOfRange { player: usize },
    #[error("path {path} is out of range for player {player}")]
    PathOutOfRange { player: usize, path: usize },
    #[error("player {player}: expected {expected} path weights, found {found}")]
    ShapeMismatch {
        player: usize,
        expected: usize,
        found: usize,
    },
    #[error("player {player}: {reason}")]
    Infeasible { player: usize, reason: String },
}

/// One edge's cost `c(y) = sum_j coef_j y^j` (`j >= 1`) with its certified
/// bounds on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialCost {
    cost: Polynomial,
    slope: Polynomial,
    integral: Polynomial,
    derivative_lower: f64,
    second_derivative_upper: f64,
    envelope_lower: f64,
    envelope_upper: f64,
}

/// Validates a full coefficient list (`coeffs[j]` multiplies `y^j`, constant
/// term included) and computes the certified bounds.
///
/// With nonnegative coefficients `c'` and `c''` are nondecreasing on `[0, 1]`,
/// so `A = c'(0)`, `B = c''(1)`, and the tightest `b` with both
/// `c(y) <= b y` and `c'(y) <= b` is `c'(1)`, which never exceeds `B + 1`.
pub fn validate_costs(coeffs: &[f64]) -> Result<PolynomialCost, CostViolation> {
    if coeffs.is_empty() {
        return Err(CostViolation::Empty);
    }
    if let Some(power) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(CostViolation::NonFinite { power });
    }
    if coeffs[0] != 0.0 {
        return Err(CostViolation::NonzeroConstant(coeffs[0]));
    }
    if let Some((power, &value)) = coeffs.iter().enumerate().find(|(_, c)| **c < 0.0) {
        return Err(CostViolation::NegativeCoefficient { power, value });
    }
    let mut trimmed = coeffs.to_vec();
    while trimmed.len() > 2 && *trimmed.last().unwrap() == 0.0 {
        trimmed.pop();
    }
    let cost = Polynomial::new(trimmed);
    let at_one = cost.eval(1.0);
    if at_one > 1.0 + 1e-15 {
        return Err(CostViolation::ExceedsUnitAtOne(at_one));
    }
    let slope = cost.derivative();
    let curvature = slope.derivative();
    let derivative_lower = slope.eval(0.0);
    if derivative_lower <= 0.0 {
        return Err(CostViolation::FlatAtOrigin);
    }
    let second_derivative_upper = curvature.eval(1.0).max(0.0);
    let envelope_lower = derivative_lower;
    let envelope_upper = slope.eval(1.0);

    for step in 1..=ENVELOPE_GRID {
        let y = step as f64 / ENVELOPE_GRID as f64;
        let c = cost.eval(y);
        let slack = 1e-12 * y;
        if c < envelope_lower * y - slack || c > envelope_upper * y + slack {
            return Err(CostViolation::EnvelopeViolated {
                a: envelope_lower,
                b: envelope_upper,
                y,
            });
        }
    }

    let integral = cost.antiderivative();
    Ok(PolynomialCost {
        cost,
        slope,
        integral,
        derivative_lower,
        second_derivative_upper,
        envelope_lower,
        envelope_upper,
    })
}

impl PolynomialCost {
    /// Builds a cost from the coefficients of `y^1, y^2, ...`.
    pub fn new(coefficients: &[f64]) -> Result<Self, CostViolation> {
        let mut full = Vec::with_capacity(coefficients.len() + 1);
        full.push(0.0);
        full.extend_from_slice(coefficients);
        validate_costs(&full)
    }

    /// `c(y) = y`.
    pub fn identity() -> Self {
        Self::new(&[1.0]).expect("identity cost is valid")
    }

    /// Coefficients of `y^1, y^2, ...`.
    pub fn coefficients(&self) -> &[f64] {
        &self.cost.coeffs()[1..]
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.cost
    }

    /// `A`: lower bound on `c'` over `[0, 1]`.
    pub fn derivative_lower(&self) -> f64 {
        self.derivative_lower
    }

    /// `B`: upper bound on `c''` over `[0, 1]`.
    pub fn second_derivative_upper(&self) -> f64 {
        self.second_derivative_upper
    }

    /// `a` in `a y <= c(y)`.
    pub fn envelope_lower(&self) -> f64 {
        self.envelope_lower
    }

    /// `b` in `c(y) <= b y`; also bounds `c'` on `[0, 1]`.
    pub fn envelope_upper(&self) -> f64 {
        self.envelope_upper
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        self.cost.eval(y)
    }

    #[inline]
    pub fn slope(&self, y: f64) -> f64 {
        self.slope.eval(y)
    }

    /// `int_0^y c`.
    #[inline]
    pub fn integral(&self, y: f64) -> f64 {
        self.integral.eval(y)
    }

    pub fn is_linear(&self) -> bool {
        self.cost.degree() <= 1
    }
}

/// `(alpha, beta, lambda)` bounds on the potential's value, gradient sup-norm
/// and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionGame {
    players: usize,
    edges: Vec<PolynomialCost>,
    paths: Vec<Vec<Vec<usize>>>,
    max_paths: usize,
    max_path_len: usize,
    k: usize,
    a: f64,
    b: f64,
    curvature: f64,
    symmetric: bool,
}

impl CongestionGame {
    /// `paths[i]` lists player `i`'s allowed paths as edge-index sets.
    pub fn new(
        players: usize,
        edges: Vec<PolynomialCost>,
        paths: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self, GameError> {
        if players == 0 {
            return Err(GameError::NoPlayers);
        }
        if edges.is_empty() {
            return Err(GameError::NoEdges);
        }
        if paths.len() != players {
            return Err(GameError::PlayerCountMismatch {
                expected: players,
                found: paths.len(),
            });
        }
        let mut paths = paths;
        for (player, list) in paths.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(GameError::NoPaths { player });
            }
            for (path, edge_set) in list.iter_mut().enumerate() {
                if edge_set.is_empty() {
                    return Err(GameError::EmptyPath { player, path });
                }
                if let Some(&edge) = edge_set.iter().find(|&&e| e >= edges.len()) {
                    return Err(GameError::UnknownEdge { player, path, edge });
                }
                edge_set.sort_unstable();
                if let Some(w) = edge_set.windows(2).find(|w| w[0] == w[1]) {
                    return Err(GameError::DuplicateEdge {
                        player,
                        path,
                        edge: w[0],
                    });
                }
            }
        }

        let max_paths = paths.iter().map(Vec::len).max().unwrap_or(0);
        let max_path_len = paths
            .iter()
            .flat_map(|list| list.iter().map(Vec::len))
            .max()
            .unwrap_or(0);
        let k = paths
            .iter()
            .flat_map(|list| {
                list.iter()
                    .map(move |s| list.iter().filter(|r| intersects(s, r)).count())
            })
            .max()
            .unwrap_or(0);
        let a = edges
            .iter()
            .map(PolynomialCost::envelope_lower)
            .fold(f64::INFINITY, f64::min);
        let b = edges
            .iter()
            .map(PolynomialCost::envelope_upper)
            .fold(0.0, f64::max);
        let curvature = edges
            .iter()
            .map(PolynomialCost::second_derivative_upper)
            .fold(0.0, f64::max);
        let symmetric = paths.windows(2).all(|w| w[0] == w[1]);

        Ok(Self {
            players,
            edges,
            paths,
            max_paths,
            max_path_len,
            k,
            a,
            b,
            curvature,
            symmetric,
        })
    }

    /// `n` players on `links` identical parallel links with cost `cost`;
    /// every player may use every link.
    pub fn parallel_links(
        players: usize,
        links: usize,
        cost: PolynomialCost,
    ) -> Result<Self, GameError> {
        let edges = vec![cost; links];
        let list: Vec<Vec<usize>> = (0..links).map(|e| vec![e]).collect();
        Self::new(players, edges, vec![list; players])
    }

    /// `n`
    pub fn players(&self) -> usize {
        self.players
    }

    /// `m = |E|`
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[PolynomialCost] {
        &self.edges
    }

    pub fn paths(&self, player: usize) -> &[Vec<usize>] {
        &self.paths[player]
    }

    pub fn all_paths(&self) -> &[Vec<Vec<usize>>] {
        &self.paths
    }

    pub fn path_count(&self, player: usize) -> usize {
        self.paths[player].len()
    }

    /// `sum_i |S_i|`, the dimension of a flow vector.
    pub fn dimension(&self) -> usize {
        self.paths.iter().map(Vec::len).sum()
    }

    /// `d = max_i |S_i|`
    pub fn max_paths(&self) -> usize {
        self.max_paths
    }

    /// Longest path, in edges.
    pub fn max_path_len(&self) -> usize {
        self.max_path_len
    }

    /// Max number of a player's paths meeting one of her paths, itself included.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Game-wide `B`.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_linear(&self) -> bool {
        self.edges.iter().all(PolynomialCost::is_linear)
    }

    /// Per-player load, `1/n`.
    pub fn mass(&self) -> f64 {
        1.0 / self.players as f64
    }

    pub fn smoothness_params(&self) -> SmoothnessParams {
        let bm = self.b * self.edges.len() as f64;
        SmoothnessParams {
            alpha: bm / 2.0,
            beta: bm,
            lambda: bm * self.k as f64,
        }
    }

    /// A Hessian bound that also counts cross-player edge sharing:
    /// `b * max_{(i,s)} sum_{e in s} N_e`, where `N_e` is the number of
    /// (player, path) pairs using `e`.
    pub fn shared_curvature_bound(&self) -> f64 {
        let mut usage = vec![0usize; self.edges.len()];
        for s in self.paths.iter().flatten() {
            for &e in s {
                usage[e] += 1;
            }
        }
        let worst = self
            .paths
            .iter()
            .flatten()
            .map(|s| s.iter().map(|&e| usage[e]).sum::<usize>())
            .max()
            .unwrap_or(0);
        self.b * worst as f64
    }

    pub(crate) fn check_profile(&self, x: &FlowProfile) -> Result<(), GameError> {
        if x.blocks.len() != self.players {
            return Err(GameError::PlayerCountMismatch {
                expected: self.players,
                found: x.blocks.len(),
            });
        }
        for (player, (block, list)) in x.blocks.iter().zip(&self.paths).enumerate() {
            if block.len() != list.len() {
                return Err(GameError::ShapeMismatch {
                    player,
                    expected: list.len(),
                    found: block.len(),
                });
            }
        }
        Ok(())
    }

    fn check_path(&self, player: usize, path: usize) -> Result<(), GameError> {
        if player >= self.players {
            return Err(GameError::PlayerOutOfRange { player });
        }
        if path >= self.paths[player].len() {
            return Err(GameError::PathOutOfRange { player, path });
        }
        Ok(())
    }

    /// `l_e(x) = sum_i sum_{s in S_i : e in s} x_{i,s}`.
    pub fn edge_loads(&self, x: &FlowProfile) -> Result<Vec<f64>, GameError> {
        self.check_profile(x)?;
        Ok(self.loads_unchecked(x.blocks()))
    }

    pub(crate) fn loads_unchecked(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        let mut loads = vec![0.0; self.edges.len()];
        for (block, list) in blocks.iter().zip(&self.paths) {
            for (&w, s) in block.iter().zip(list) {
                for &e in s {
                    loads[e] += w;
                }
            }
        }
        loads
    }

    /// `c_s = sum_{e in s} c_e(l_e)` for an edge-load vector.
    #[inline]
    pub fn path_cost_at(&self, loads: &[f64], player: usize, path: usize) -> f64 {
        self.paths[player][path]
            .iter()
            .map(|&e| self.edges[e].eval(loads[e]))
            .sum()
    }

    pub fn path_cost(&self, x: &FlowProfile, player: usize, path: usize) -> Result<f64, GameError> {
        self.check_path(player, path)?;
        let loads = self.edge_loads(x)?;
        Ok(self.path_cost_at(&loads, player, path))
    }

    /// Every player's path costs at the given loads.
    pub fn path_costs_at(&self, loads: &[f64]) -> Vec<Vec<f64>> {
        let edge_costs: Vec<f64> = self
            .edges
            .iter()
            .zip(loads)
            .map(|(c, &l)| c.eval(l))
            .collect();
        self.paths
            .iter()
            .map(|list| {
                list.iter()
                    .map(|s| s.iter().map(|&e| edge_costs[e]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn potential_at(&self, loads: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(loads)
            .map(|(c, &l)| c.integral(l))
            .sum()
    }

    /// `Phi(x) = sum_e int_0^{l_e(x)} c_e`.
    pub fn potential(&self, x: &FlowProfile) -> Result<f64, GameError> {
        let loads = self.edge_loads(x)?;
        Ok(self.potential_at(&loads))
    }

    /// Entry `(i, s)` is `dPhi/dx_{i,s}`, which is exactly the path cost
    /// `c_s(x)`; both go through [`Self::path_costs_at`].
    pub fn potential_gradient(&self, x: &FlowProfile) -> Result<Vec<Vec<f64>>, GameError> {
        let loads = self.edge_loads(x)?;
        Ok(self.path_costs_at(&loads))
    }

    pub fn average_cost_at(&self, loads: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(loads)
            .map(|(c, &l)| l * c.eval(l))
            .sum()
    }

    pub fn max_cost_at(&self, loads: &[f64]) -> f64 {
        self.path_costs_at(loads)
            .iter()
            .flatten()
            .fold(0.0, |acc: f64, &c| acc.max(c))
    }

    /// `C_A(x) = sum_e l_e c_e(l_e)`.
    pub fn average_cost(&self, x: &FlowProfile) -> Result<f64, GameError> {
        let loads = self.edge_loads(x)?;
        Ok(self.average_cost_at(&loads))
    }

    /// `C_M(x)`: the most expensive path over every player's allowed paths.
    pub fn max_cost(&self, x: &FlowProfile) -> Result<f64, GameError> {
        let loads = self.edge_loads(x)?;
        Ok(self.max_cost_at(&loads))
    }
}

fn intersects(s: &[usize], r: &[usize]) -> bool {
    // both sorted
    let (mut i, mut j) = (0, 0);
    while i < s.len() && j < r.len() {
        match s[i].cmp(&r[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// A joint strategy `x in K`: per player, nonnegative weights over her
/// allowed paths summing to `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowProfile {
    blocks: Vec<Vec<f64>>,
}

impl FlowProfile {
    /// Checks shape and feasibility against `game`.
    pub fn new(game: &CongestionGame, blocks: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let profile = Self { blocks };
        game.check_profile(&profile)?;
        let mass = game.mass();
        for (player, block) in profile.blocks.iter().enumerate() {
            if let Some(w) = block.iter().find(|w| !w.is_finite() || **w < 0.0) {
                return Err(GameError::Infeasible {
                    player,
                    reason: format!("weight {w} is negative or not finite"),
                });
            }
            let sum: f64 = block.iter().sum();
            if (sum - mass).abs() > FEASIBILITY_TOL {
                return Err(GameError::Infeasible {
                    player,
                    reason: format!("weights sum to {sum}, expected {mass}"),
                });
            }
        }
        Ok(profile)
    }

    /// Builds a profile from mixed strategies `pi_i` (each summing to one).
    pub fn from_probabilities(
        game: &CongestionGame,
        probabilities: Vec<Vec<f64>>,
    ) -> Result<Self, GameError> {
        let mass = game.mass();
        let blocks = probabilities
            .into_iter()
            .map(|p| p.into_iter().map(|v| v * mass).collect())
            .collect();
        Self::new(game, blocks)
    }

    /// Equal load on each allowed path.
    pub fn uniform(game: &CongestionGame) -> Self {
        let mass = game.mass();
        let blocks = (0..game.players())
            .map(|i| {
                let size = game.path_count(i);
                vec![mass / size as f64; size]
            })
            .collect();
        Self { blocks }
    }

    /// Player `i` puts all of her load on path `choice[i]`.
    pub fn pure(game: &CongestionGame, choice: &[usize]) -> Result<Self, GameError> {
        if choice.len() != game.players() {
            return Err(GameError::PlayerCountMismatch {
                expected: game.players(),
                found: choice.len(),
            });
        }
        let mass = game.mass();
        let mut blocks = Vec::with_capacity(choice.len());
        for (player, &path) in choice.iter().enumerate() {
            game.check_path(player, path)?;
            let mut block = vec![0.0; game.path_count(player)];
            block[path] = mass;
            blocks.push(block);
        }
        Ok(Self { blocks })
    }

    pub(crate) fn from_blocks_unchecked(blocks: Vec<Vec<f64>>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        self.blocks
    }

    pub fn total_mass(&self) -> f64 {
        self.blocks.iter().flatten().sum()
    }

    /// `(1 - t) self + t other`.
    pub fn interpolate(&self, other: &FlowProfile, t: f64) -> FlowProfile {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(u, v)| {
                u.iter()
                    .zip(v)
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect()
            })
            .collect();
        FlowProfile { blocks }
    }

    /// Clamps negative round-off to zero and rescales every block to `mass`.
    pub fn renormalize(&mut self, mass: f64) {
        for block in &mut self.blocks {
            renormalize_block(block, mass);
        }
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &FlowProfile) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn renormalize_block(block: &mut [f64], mass: f64) {
    for w in block.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let sum: f64 = block.iter().sum();
    if sum > 0.0 {
        let scale = mass / sum;
        block.iter_mut().for_each(|w| *w *= scale);
    } else {
        let even = mass / block.len() as f64;
        block.iter_mut().for_each(|w| *w = even);
    }
}
