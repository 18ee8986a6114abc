//! Mirror-descent dynamics under bulletin-board feedback: every player sees
//! the cost of each of her allowed paths after every step.

use thiserror::Error;

use crate::bregman::{BregmanError, FeasibleSet, GeometryKind, MirrorMap};
use crate::game::{CongestionGame, FlowProfile, GameError};
use crate::minimize::{self, MaxCostBracket, Minimum};

/// Paths carrying more than this much flow count as used.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;
/// Slack on `Phi(x^{t+1}) <= Phi(x^t)`.
pub const MONOTONE_TOL: f64 = 1e-10;
/// Slack on the δ-gap bound `sqrt(8 b m gap)`.
pub const DELTA_TOL: f64 = 1e-6;
/// Frank-Wolfe certificate used for `Phi(q)` and `min C_A`.
pub const REFERENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BulletinError {
    #[error("learning rate {eta} of player {player} exceeds 1/λ = {limit}")]
    RateExceedsSmoothness { player: usize, eta: f64, limit: f64 },
    #[error("learning rate {eta} of player {player} must be positive and finite")]
    InvalidRate { player: usize, eta: f64 },
    #[error("expected {expected} learning rates, found {found}")]
    RateCount { expected: usize, found: usize },
    #[error("target gap ε = {0} must be positive")]
    InvalidEpsilon(f64),
    #[error("entropy geometry needs a strictly positive initial profile (player {player})")]
    EntropyBoundary { player: usize },
    #[error("maximum-cost bound only covers symmetric games")]
    AsymmetricGame,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Bregman(#[from] BregmanError),
}

#[derive(Debug, Clone)]
pub struct BulletinConfig {
    pub geometry: GeometryKind,
    /// `eta_i`; `None` means `1/λ` for every player.
    pub rates: Option<Vec<f64>>,
    pub max_steps: usize,
    pub epsilon: f64,
    /// Defaults to the uniform profile.
    pub initial: Option<FlowProfile>,
    /// Stop at the first step whose certified gap is at most `epsilon`.
    pub stop_at_target: bool,
    /// Keep one [`StepRecord`] every `record_every` steps (step 0 and the
    /// last step are always kept). Violations are counted at every step.
    pub record_every: usize,
    /// Keep every iterate, for [`regret`].
    pub keep_profiles: bool,
}

impl BulletinConfig {
    pub fn new(geometry: GeometryKind, epsilon: f64, max_steps: usize) -> Self {
        Self {
            geometry,
            rates: None,
            max_steps,
            epsilon,
            initial: None,
            stop_at_target: false,
            record_every: 1,
            keep_profiles: false,
        }
    }

    /// Resolves and checks `eta_i <= 1/λ`.
    pub fn resolve_rates(&self, game: &CongestionGame) -> Result<Vec<f64>, BulletinError> {
        let limit = 1.0 / game.smoothness_params().lambda;
        let rates = match &self.rates {
            None => vec![limit; game.players()],
            Some(r) if r.len() != game.players() => {
                return Err(BulletinError::RateCount {
                    expected: game.players(),
                    found: r.len(),
                })
            }
            Some(r) => r.clone(),
        };
        for (player, &eta) in rates.iter().enumerate() {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(BulletinError::InvalidRate { player, eta });
            }
            if eta > limit * (1.0 + 1e-12) {
                return Err(BulletinError::RateExceedsSmoothness { player, eta, limit });
            }
        }
        Ok(rates)
    }
}

/// Oracle values a run is measured against.
#[derive(Debug, Clone)]
pub struct Reference {
    /// `q = argmin Phi`.
    pub potential: Minimum,
    /// `x* = argmin C_A`.
    pub average_cost: Minimum,
}

impl Reference {
    pub fn compute(game: &CongestionGame) -> Self {
        Self {
            potential: reference_minimizer(game, REFERENCE_TOL),
            average_cost: minimize::minimize_average_cost(game, REFERENCE_TOL),
        }
    }

    pub fn phi_q(&self) -> f64 {
        self.potential.value
    }
}

/// `(q, Phi(q))` by pairwise Frank-Wolfe; `certificate` bounds the error.
pub fn reference_minimizer(game: &CongestionGame, tol: f64) -> Minimum {
    let m = minimize::minimize_potential(game, 0.0, tol);
    if !m.converged {
        log::warn!(
            "reference minimizer stopped at certificate {:e} > {tol:e}",
            m.certificate
        );
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub phi: f64,
    /// `Phi(x^t) - Phi(q)`.
    pub phi_gap: f64,
    pub delta_gap: f64,
    pub c_avg: f64,
    pub c_max: f64,
    /// `C_A(x^t) / min C_A`.
    pub ratio_avg: f64,
    /// `(b/a)(1 + 2 m gap / a)`.
    pub bound_avg: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str =
        "step,phi,phi_gap,delta_gap,c_avg,c_max,ratio_avg,bound_avg";
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub steps: Vec<StepRecord>,
    pub profiles: Vec<FlowProfile>,
    pub final_profile: FlowProfile,
    pub final_step: usize,
    pub phi_q: f64,
    pub reference_certificate: f64,
    pub rates: Vec<f64>,
    /// `min_i eta_i`.
    pub eta: f64,
    pub epsilon: f64,
    /// `max_i D(q_i, x^0_i)`.
    pub gamma: f64,
    /// Closed-form bound on `gamma` for this geometry.
    pub closed_form_gamma: f64,
    /// `n gamma / (eta epsilon)` with the measured `gamma`.
    pub theorem_budget: f64,
    /// First step whose certified gap is at most `epsilon`.
    pub first_hit: Option<usize>,
    pub monotone_violations: usize,
    pub delta_violations: usize,
    /// Violations counted with [`qualified_delta_gap`].
    pub qualified_delta_violations: usize,
    /// Largest `Phi(x^{t+1}) - Phi(x^t)` seen.
    pub worst_ascent: f64,
}

impl RunReport {
    /// `Phi(x^T) - Phi(q)` plus the reference certificate.
    pub fn final_certified_gap(&self) -> f64 {
        self.steps.last().map_or(f64::INFINITY, |r| r.phi_gap) + self.reference_certificate
    }
}

/// `max_i [max_{s used} c_s(x) - min_{s'} c_{s'}(x)]`, floored at zero.
pub fn delta_equilibrium_gap(game: &CongestionGame, x: &FlowProfile) -> Result<f64, GameError> {
    let loads = game.edge_loads(x)?;
    Ok(delta_gap_at(game, x, &game.path_costs_at(&loads)))
}

pub(crate) fn delta_gap_at(game: &CongestionGame, x: &FlowProfile, costs: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..game.players() {
        let c = &costs[i];
        let cheapest = c.iter().copied().fold(f64::INFINITY, f64::min);
        let used = c
            .iter()
            .zip(x.player(i))
            .filter(|(_, &w)| w > SUPPORT_THRESHOLD)
            .map(|(&cs, _)| cs)
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(used - cheapest);
    }
    worst
}

/// δ-gap over the paths that carry at least `(c_s - c_min) / (4 b m)`,
/// the load the δ-equilibrium argument shifts off a costlier path.
pub fn qualified_delta_gap(game: &CongestionGame, x: &FlowProfile) -> Result<f64, GameError> {
    let loads = game.edge_loads(x)?;
    Ok(qualified_delta_gap_at(game, x, &game.path_costs_at(&loads)))
}

pub(crate) fn qualified_delta_gap_at(
    game: &CongestionGame,
    x: &FlowProfile,
    costs: &[Vec<f64>],
) -> f64 {
    let slope = 4.0 * game.b() * game.edge_count() as f64;
    let mut worst: f64 = 0.0;
    for i in 0..game.players() {
        let c = &costs[i];
        let cheapest = c.iter().copied().fold(f64::INFINITY, f64::min);
        for (&cs, &w) in c.iter().zip(x.player(i)) {
            let excess = cs - cheapest;
            if w > SUPPORT_THRESHOLD && w >= excess / slope {
                worst = worst.max(excess);
            }
        }
    }
    worst
}

/// `sqrt(8 b m max(gap, 0))`.
pub fn delta_bound(game: &CongestionGame, gap: f64) -> f64 {
    (8.0 * game.b() * game.edge_count() as f64 * gap.max(0.0)).sqrt()
}

/// `(b/a)(1 + 2 m eps / a)`.
pub fn average_ratio_bound(game: &CongestionGame, eps: f64) -> f64 {
    let (a, b, m) = (game.a(), game.b(), game.edge_count() as f64);
    (b / a) * (1.0 + 2.0 * m * eps.max(0.0) / a)
}

/// `(b/a)(1 + 2 m eps / a + delta m / b)` with `delta = sqrt(8 b m eps)`.
pub fn max_ratio_bound(game: &CongestionGame, eps: f64) -> f64 {
    let (a, b, m) = (game.a(), game.b(), game.edge_count() as f64);
    let delta = delta_bound(game, eps);
    (b / a) * (1.0 + 2.0 * m * eps.max(0.0) / a + delta * m / b)
}

/// Runs `x^{t+1}_i = argmin_z eta_i <grad_i Phi(x^t), z> + D(z, x^t_i)`.
pub fn run_bulletin(
    game: &CongestionGame,
    config: &BulletinConfig,
) -> Result<RunReport, BulletinError> {
    let reference = Reference::compute(game);
    run_bulletin_with(game, config, &reference)
}

pub fn run_bulletin_with(
    game: &CongestionGame,
    config: &BulletinConfig,
    reference: &Reference,
) -> Result<RunReport, BulletinError> {
    if !(config.epsilon.is_finite() && config.epsilon > 0.0) {
        return Err(BulletinError::InvalidEpsilon(config.epsilon));
    }
    let rates = config.resolve_rates(game)?;
    let eta = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let geo = config.geometry;
    let mass = game.mass();

    let mut x = match &config.initial {
        Some(x0) => FlowProfile::new(game, x0.blocks().to_vec())?,
        None => FlowProfile::uniform(game),
    };
    if geo == GeometryKind::Entropy {
        if let Some(player) = (0..game.players()).find(|&i| x.player(i).iter().any(|&w| w <= 0.0)) {
            return Err(BulletinError::EntropyBoundary { player });
        }
    }
    let sets: Vec<FeasibleSet> = (0..game.players())
        .map(|i| FeasibleSet::simplex(game.path_count(i), mass))
        .collect::<Result<_, _>>()?;

    let q = &reference.potential.profile;
    let mut gamma: f64 = 0.0;
    for i in 0..game.players() {
        gamma = gamma.max(geo.divergence(q.player(i), x.player(i))?);
    }
    let n = game.players() as f64;
    let closed_form_gamma = match geo {
        GeometryKind::Euclidean => 2.0 / (n * n),
        GeometryKind::Entropy => (game.max_paths() as f64 * n).ln(),
    };
    let theorem_budget = n * gamma / (eta * config.epsilon);

    let phi_q = reference.phi_q();
    let certificate = reference.potential.certificate.max(0.0);
    let c_avg_min = reference.average_cost.lower_bound();
    let record_every = config.record_every.max(1);

    let mut steps = Vec::new();
    let mut profiles = Vec::new();
    let mut first_hit = None;
    let mut monotone_violations = 0;
    let mut delta_violations = 0;
    let mut qualified_delta_violations = 0;
    let mut worst_ascent = f64::NEG_INFINITY;
    let mut previous_phi = f64::INFINITY;
    let mut t = 0;
    loop {
        let loads = game.loads_unchecked(x.blocks());
        let costs = game.path_costs_at(&loads);
        let phi = game.potential_at(&loads);
        let phi_gap = phi - phi_q;
        if t > 0 {
            let ascent = phi - previous_phi;
            worst_ascent = worst_ascent.max(ascent);
            if ascent > MONOTONE_TOL {
                monotone_violations += 1;
            }
        }
        previous_phi = phi;
        let delta_gap = delta_gap_at(game, &x, &costs);
        let bound = delta_bound(game, phi_gap) + DELTA_TOL;
        if delta_gap > bound {
            delta_violations += 1;
            if qualified_delta_gap_at(game, &x, &costs) > bound {
                qualified_delta_violations += 1;
            }
        }
        let hit = phi_gap + certificate <= config.epsilon;
        if hit && first_hit.is_none() {
            first_hit = Some(t);
        }
        let last = t >= config.max_steps || (hit && config.stop_at_target);
        if t % record_every == 0 || last {
            let c_avg = game.average_cost_at(&loads);
            steps.push(StepRecord {
                step: t,
                phi,
                phi_gap,
                delta_gap,
                c_avg,
                c_max: game.max_cost_at(&loads),
                ratio_avg: c_avg / c_avg_min,
                bound_avg: average_ratio_bound(game, phi_gap),
            });
        }
        if config.keep_profiles {
            profiles.push(x.clone());
        }
        if last {
            break;
        }
        let mut next = Vec::with_capacity(game.players());
        for i in 0..game.players() {
            next.push(geo.mirror_step(&sets[i], x.player(i), &costs[i], rates[i])?);
        }
        x = FlowProfile::from_blocks_unchecked(next);
        t += 1;
    }

    Ok(RunReport {
        steps,
        profiles,
        final_profile: x,
        final_step: t,
        phi_q,
        reference_certificate: certificate,
        rates,
        eta,
        epsilon: config.epsilon,
        gamma,
        closed_form_gamma,
        theorem_budget,
        first_hit,
        monotone_violations,
        delta_violations,
        qualified_delta_violations,
        worst_ascent,
    })
}

/// Social-cost ratios of one profile against the oracle minima.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialRatios {
    /// `Phi(x) - Phi(q)`, the `eps` the bounds are evaluated at.
    pub epsilon: f64,
    pub ratio_avg: f64,
    pub bound_avg: f64,
    pub ratio_max: Option<f64>,
    pub bound_max: Option<f64>,
}

impl SocialRatios {
    pub fn average_holds(&self) -> bool {
        self.ratio_avg <= self.bound_avg
    }

    pub fn max_holds(&self) -> Option<bool> {
        Some(self.ratio_max? <= self.bound_max?)
    }
}

/// Ratios against certified lower bounds on `min C_A` (and on `min C_M`
/// when `max_bracket` is given). The bounds are evaluated at the certified
/// gap `eps = Phi(x) - Phi(q) + certificate`.
pub fn social_ratio_report(
    game: &CongestionGame,
    x: &FlowProfile,
    reference: &Reference,
    max_bracket: Option<&MaxCostBracket>,
) -> Result<SocialRatios, BulletinError> {
    if max_bracket.is_some() && !game.is_symmetric() {
        return Err(BulletinError::AsymmetricGame);
    }
    let loads = game.edge_loads(x)?;
    let eps =
        (game.potential_at(&loads) - reference.phi_q() + reference.potential.certificate).max(0.0);
    let ratio_avg = game.average_cost_at(&loads) / reference.average_cost.lower_bound();
    let (ratio_max, bound_max) = match max_bracket {
        Some(bracket) => (
            Some(game.max_cost_at(&loads) / bracket.lower),
            Some(max_ratio_bound(game, eps)),
        ),
        None => (None, None),
    };
    Ok(SocialRatios {
        epsilon: eps,
        ratio_avg,
        bound_avg: average_ratio_bound(game, eps),
        ratio_max,
        bound_max,
    })
}

/// `(1/T)[sum_t n <c_i(x^t), x^t_i> - min_s sum_t c_s(x^t)]`.
pub fn regret(
    trajectory: &[FlowProfile],
    game: &CongestionGame,
    player: usize,
) -> Result<f64, BulletinError> {
    if trajectory.is_empty() {
        return Err(BulletinError::EmptyTrajectory);
    }
    let n = game.players() as f64;
    let mut realized = 0.0;
    let mut totals = vec![0.0; game.path_count(player)];
    for x in trajectory {
        let loads = game.edge_loads(x)?;
        let costs: Vec<f64> = (0..game.path_count(player))
            .map(|s| game.path_cost_at(&loads, player, s))
            .collect();
        realized += n * costs
            .iter()
            .zip(x.player(player))
            .map(|(c, w)| c * w)
            .sum::<f64>();
        for (total, c) in totals.iter_mut().zip(&costs) {
            *total += c;
        }
    }
    let best = totals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((realized - best) / trajectory.len() as f64)
}
