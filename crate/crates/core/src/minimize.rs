//! Block pairwise Frank-Wolfe over products of (floored) scaled simplexes.
//!
//! Objectives depend on the flow only through the edge loads. Each pair move
//! shifts one player's mass from her worst used path to her best path with an
//! exact line search (bisection on the monotone directional derivative). The
//! Frank-Wolfe gap certifies `F(x) - min F <= gap` by convexity.

use crate::game::{CongestionGame, FlowProfile};

/// A convex function of the edge-load vector.
pub trait LoadObjective {
    fn value(&self, loads: &[f64]) -> f64;

    /// `dF/dl_e` for every edge.
    fn marginals(&self, loads: &[f64]) -> Vec<f64>;

    /// `d/dt F(l + t delta)` where `delta` is sparse.
    fn directional(&self, loads: &[f64], delta: &[(usize, f64)], t: f64) -> f64 {
        let mut shifted = loads.to_vec();
        for &(e, d) in delta {
            shifted[e] += t * d;
        }
        let marginals = self.marginals(&shifted);
        delta.iter().map(|&(e, d)| marginals[e] * d).sum()
    }
}

/// The potential `sum_e int_0^{l_e} c_e`.
pub struct Potential<'a>(pub &'a CongestionGame);

/// The average individual cost `sum_e l_e c_e(l_e)`.
pub struct AverageCost<'a>(pub &'a CongestionGame);

/// `sum_s w_s c_s(l)` over a fixed list of paths.
pub struct WeightedPathCost<'a> {
    game: &'a CongestionGame,
    edge_weights: Vec<f64>,
}

/// `mu ln sum_s exp(c_s(l) / mu)` over a fixed list of paths; within
/// `mu ln |paths|` above the maximum path cost.
pub struct SoftMaxCost<'a> {
    game: &'a CongestionGame,
    paths: &'a [Vec<usize>],
    mu: f64,
}

impl LoadObjective for Potential<'_> {
    fn value(&self, loads: &[f64]) -> f64 {
        self.0.potential_at(loads)
    }

    fn marginals(&self, loads: &[f64]) -> Vec<f64> {
        self.0
            .edges()
            .iter()
            .zip(loads)
            .map(|(c, &y)| c.eval(y))
            .collect()
    }

    fn directional(&self, loads: &[f64], delta: &[(usize, f64)], t: f64) -> f64 {
        let edges = self.0.edges();
        delta
            .iter()
            .map(|&(e, d)| edges[e].eval(loads[e] + t * d) * d)
            .sum()
    }
}

impl LoadObjective for AverageCost<'_> {
    fn value(&self, loads: &[f64]) -> f64 {
        self.0.average_cost_at(loads)
    }

    fn marginals(&self, loads: &[f64]) -> Vec<f64> {
        self.0
            .edges()
            .iter()
            .zip(loads)
            .map(|(c, &y)| c.eval(y) + y * c.slope(y))
            .collect()
    }

    fn directional(&self, loads: &[f64], delta: &[(usize, f64)], t: f64) -> f64 {
        let edges = self.0.edges();
        delta
            .iter()
            .map(|&(e, d)| {
                let y = loads[e] + t * d;
                (edges[e].eval(y) + y * edges[e].slope(y)) * d
            })
            .sum()
    }
}

impl<'a> WeightedPathCost<'a> {
    pub fn new(game: &'a CongestionGame, paths: &[Vec<usize>], weights: &[f64]) -> Self {
        let mut edge_weights = vec![0.0; game.edge_count()];
        for (s, &w) in paths.iter().zip(weights) {
            for &e in s {
                edge_weights[e] += w;
            }
        }
        Self { game, edge_weights }
    }
}

impl LoadObjective for WeightedPathCost<'_> {
    fn value(&self, loads: &[f64]) -> f64 {
        self.game
            .edges()
            .iter()
            .zip(loads)
            .zip(&self.edge_weights)
            .map(|((c, &y), w)| w * c.eval(y))
            .sum()
    }

    fn marginals(&self, loads: &[f64]) -> Vec<f64> {
        self.game
            .edges()
            .iter()
            .zip(loads)
            .zip(&self.edge_weights)
            .map(|((c, &y), w)| w * c.slope(y))
            .collect()
    }

    fn directional(&self, loads: &[f64], delta: &[(usize, f64)], t: f64) -> f64 {
        let edges = self.game.edges();
        delta
            .iter()
            .map(|&(e, d)| self.edge_weights[e] * edges[e].slope(loads[e] + t * d) * d)
            .sum()
    }
}

impl<'a> SoftMaxCost<'a> {
    pub fn new(game: &'a CongestionGame, paths: &'a [Vec<usize>], mu: f64) -> Self {
        Self { game, paths, mu }
    }

    fn path_costs(&self, loads: &[f64]) -> Vec<f64> {
        let edges = self.game.edges();
        self.paths
            .iter()
            .map(|s| s.iter().map(|&e| edges[e].eval(loads[e])).sum())
            .collect()
    }

    /// Softmax weights of the path costs at `loads`.
    pub fn weights(&self, loads: &[f64]) -> Vec<f64> {
        let costs = self.path_costs(loads);
        let top = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = costs.iter().map(|c| ((c - top) / self.mu).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

impl LoadObjective for SoftMaxCost<'_> {
    fn value(&self, loads: &[f64]) -> f64 {
        let costs = self.path_costs(loads);
        let top = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        top + self.mu
            * costs
                .iter()
                .map(|c| ((c - top) / self.mu).exp())
                .sum::<f64>()
                .ln()
    }

    fn marginals(&self, loads: &[f64]) -> Vec<f64> {
        let weights = self.weights(loads);
        let mut edge_weights = vec![0.0; loads.len()];
        for (s, w) in self.paths.iter().zip(&weights) {
            for &e in s {
                edge_weights[e] += w;
            }
        }
        self.game
            .edges()
            .iter()
            .zip(loads)
            .zip(&edge_weights)
            .map(|((c, &y), w)| w * c.slope(y))
            .collect()
    }
}

/// Result of a Frank-Wolfe run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub profile: FlowProfile,
    pub value: f64,
    /// Frank-Wolfe gap at `profile`; bounds `value - min` from above.
    pub certificate: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl Minimum {
    /// Certified lower bound on the minimum.
    pub fn lower_bound(&self) -> f64 {
        self.value - self.certificate.max(0.0)
    }
}

pub const DEFAULT_SWEEP_CAP: usize = 200_000;

fn path_gradient(game: &CongestionGame, marginals: &[f64], player: usize) -> Vec<f64> {
    game.paths(player)
        .iter()
        .map(|s| s.iter().map(|&e| marginals[e]).sum())
        .collect()
}

/// `sum_i <g_i, x_i> - min_{v in K_i} <g_i, v>`.
fn frank_wolfe_gap(
    game: &CongestionGame,
    marginals: &[f64],
    blocks: &[Vec<f64>],
    floor: f64,
) -> f64 {
    (0..game.players())
        .map(|i| {
            let g = path_gradient(game, marginals, i);
            let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
            g.iter()
                .zip(&blocks[i])
                .map(|(gs, xs)| (gs - g_min) * (xs - floor))
                .sum::<f64>()
        })
        .sum()
}

/// Edge-load change of moving one unit from path `from` to path `to`.
fn pair_delta(from: &[usize], to: &[usize]) -> Vec<(usize, f64)> {
    let mut delta: Vec<(usize, f64)> = to
        .iter()
        .filter(|e| from.binary_search(e).is_err())
        .map(|&e| (e, 1.0))
        .collect();
    delta.extend(
        from.iter()
            .filter(|e| to.binary_search(e).is_err())
            .map(|&e| (e, -1.0)),
    );
    delta
}

/// Exact minimizer of `t -> F(l + t delta)` on `[0, t_max]`.
fn line_search<O: LoadObjective + ?Sized>(
    objective: &O,
    loads: &[f64],
    delta: &[(usize, f64)],
    t_max: f64,
) -> f64 {
    if objective.directional(loads, delta, t_max) <= 0.0 {
        return t_max;
    }
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if objective.directional(loads, delta, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes `objective` over `{x : x_{i,s} >= floor, sum_s x_{i,s} = 1/n}`
/// from `start`, stopping once the Frank-Wolfe gap is at most `tol`.
pub fn minimize<O: LoadObjective + ?Sized>(
    game: &CongestionGame,
    objective: &O,
    floor: f64,
    start: &FlowProfile,
    tol: f64,
    sweep_cap: usize,
) -> Minimum {
    let mut blocks = start.blocks().to_vec();
    let mut loads = game.loads_unchecked(&blocks);
    let mut marginals = objective.marginals(&loads);
    let mut certificate = frank_wolfe_gap(game, &marginals, &blocks, floor);
    let mut sweeps = 0;
    while certificate > tol && sweeps < sweep_cap {
        sweeps += 1;
        for i in 0..game.players() {
            let g = path_gradient(game, &marginals, i);
            let x = &blocks[i];
            let mut to = 0;
            for s in 1..g.len() {
                if g[s] < g[to] {
                    to = s;
                }
            }
            let mut from = None;
            for s in 0..g.len() {
                if x[s] > floor && from.is_none_or(|f: usize| g[s] > g[f]) {
                    from = Some(s);
                }
            }
            let Some(from) = from else { continue };
            if from == to || g[from] <= g[to] {
                continue;
            }
            let paths = game.paths(i);
            let delta = pair_delta(&paths[from], &paths[to]);
            if delta.is_empty() {
                continue;
            }
            let t_max = x[from] - floor;
            let t = line_search(objective, &loads, &delta, t_max);
            if t <= 0.0 {
                continue;
            }
            let block = &mut blocks[i];
            if t >= t_max {
                block[to] += t_max;
                block[from] = floor;
            } else {
                block[to] += t;
                block[from] -= t;
            }
            for &(e, d) in &delta {
                loads[e] += t.min(t_max) * d;
            }
            marginals = objective.marginals(&loads);
        }
        // refresh loads to shed accumulated drift
        loads = game.loads_unchecked(&blocks);
        marginals = objective.marginals(&loads);
        certificate = frank_wolfe_gap(game, &marginals, &blocks, floor);
    }
    log::debug!("frank-wolfe: {sweeps} sweeps, certificate {certificate:e}");
    Minimum {
        value: objective.value(&loads),
        profile: FlowProfile::from_blocks_unchecked(blocks),
        certificate,
        sweeps,
        converged: certificate <= tol,
    }
}

fn floored_uniform(game: &CongestionGame) -> FlowProfile {
    FlowProfile::uniform(game)
}

/// `argmin_{x in K} Phi`, or over the floored set when `floor > 0`.
pub fn minimize_potential(game: &CongestionGame, floor: f64, tol: f64) -> Minimum {
    minimize(
        game,
        &Potential(game),
        floor,
        &floored_uniform(game),
        tol,
        DEFAULT_SWEEP_CAP,
    )
}

/// `argmin_{x in K} C_A`.
pub fn minimize_average_cost(game: &CongestionGame, tol: f64) -> Minimum {
    minimize(
        game,
        &AverageCost(game),
        0.0,
        &floored_uniform(game),
        tol,
        DEFAULT_SWEEP_CAP,
    )
}

/// Bracket on `min_{x in K} C_M`.
#[derive(Debug, Clone)]
pub struct MaxCostBracket {
    pub profile: FlowProfile,
    /// `C_M(profile)`.
    pub upper: f64,
    /// Certified by weak duality: `max_s c_s >= sum_s w_s c_s` for any weights.
    pub lower: f64,
}

/// The distinct paths across all players.
pub fn path_union(game: &CongestionGame) -> Vec<Vec<usize>> {
    let mut union: Vec<Vec<usize>> = game.all_paths().iter().flatten().cloned().collect();
    union.sort();
    union.dedup();
    union
}

/// Minimizes `C_M` by a decreasing schedule of softmax smoothings, then
/// certifies a lower bound from the final softmax weights.
pub fn minimize_max_cost(game: &CongestionGame, tol: f64) -> MaxCostBracket {
    let union = path_union(game);
    let mut profile = floored_uniform(game);
    let scale = game
        .max_cost(&profile)
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let mut mu = 1e-2 * scale;
    let mut weights = vec![1.0 / union.len() as f64; union.len()];
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut best = profile.clone();
    while mu > 1e-9 * scale {
        let smooth = SoftMaxCost::new(game, &union, mu);
        let run = minimize(game, &smooth, 0.0, &profile, tol * 1e-2, 20_000);
        profile = run.profile;
        let loads = game.loads_unchecked(profile.blocks());
        let value = game.max_cost_at(&loads);
        if value < upper {
            upper = value;
            best = profile.clone();
        }
        weights = smooth.weights(&loads);
        let dual = WeightedPathCost::new(game, &union, &weights);
        let certified = minimize(game, &dual, 0.0, &profile, tol * 1e-2, 20_000).lower_bound();
        lower = lower.max(certified);
        if upper - lower <= tol {
            break;
        }
        mu *= 0.1;
    }
    log::debug!("max-cost bracket [{lower:e}, {upper:e}], weights {weights:?}");
    MaxCostBracket {
        profile: best,
        upper,
        lower,
    }
}
