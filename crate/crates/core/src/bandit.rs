//! Episode-based bandit dynamics for atomic congestion games.
//!
//! During an episode every player keeps her mixed strategy fixed, samples one
//! path per step and observes only that path's cost. The per-path averages
//! form the gradient estimate for a mirror step over the floored set.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bregman::{BregmanError, FeasibleSet, GeometryKind, MirrorMap};
use crate::bulletin::SUPPORT_THRESHOLD;
use crate::game::{CongestionGame, FlowProfile, GameError};
use crate::minimize::{self, Minimum};

/// Largest outcome count [`MixedMode::Enumerate`] accepts.
pub const ENUMERATION_CAP: u64 = 1_000_000;
/// Slack in [`descent_step_check`].
pub const DESCENT_TOL: f64 = 1e-9;
/// Slack on the floor `Lambda / n` of every iterate.
pub const FLOOR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BanditError {
    #[error("player {player}: path probabilities sum to {sum}, not 1")]
    Probabilities { player: usize, sum: f64 },
    #[error("player {player} chose path {path} outside her {count} paths")]
    BadChoice {
        player: usize,
        path: usize,
        count: usize,
    },
    #[error(
        "floor parameter Λ = {lambda} is infeasible: need 0 < Λ and |S_i| Λ < 1 (d = {paths})"
    )]
    Floor { lambda: f64, paths: usize },
    #[error("κ = {0} must lie in (0, 1)")]
    Kappa(f64),
    #[error("ν = {0} must be at least 1")]
    Nu(f64),
    #[error("learning rate {eta} of player {player} exceeds 1/λ = {limit}")]
    RateExceedsSmoothness { player: usize, eta: f64, limit: f64 },
    #[error("learning rate {eta} of player {player} must be positive and finite")]
    InvalidRate { player: usize, eta: f64 },
    #[error("expected {expected} learning rates, found {found}")]
    RateCount { expected: usize, found: usize },
    #[error("θ = sqrt(η Γ ϵ n) = {0} exceeds 1")]
    Theta(f64),
    #[error(
        "{outcomes} joint outcomes exceed the enumeration cap {ENUMERATION_CAP}; use Monte Carlo"
    )]
    EnumerationCap { outcomes: u128 },
    #[error("replay log: {0}")]
    Replay(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Bregman(#[from] BregmanError),
}

/// One path per player; `X_{i,s} = 1/n` on the chosen path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceVector {
    choices: Vec<usize>,
}

impl ChoiceVector {
    pub fn new(game: &CongestionGame, choices: Vec<usize>) -> Result<Self, BanditError> {
        if choices.len() != game.players() {
            return Err(GameError::PlayerCountMismatch {
                expected: game.players(),
                found: choices.len(),
            }
            .into());
        }
        for (player, &path) in choices.iter().enumerate() {
            let count = game.path_count(player);
            if path >= count {
                return Err(BanditError::BadChoice {
                    player,
                    path,
                    count,
                });
            }
        }
        Ok(Self { choices })
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    /// `X` as a flow profile.
    pub fn to_profile(&self, game: &CongestionGame) -> FlowProfile {
        FlowProfile::pure(game, &self.choices).expect("choices validated on construction")
    }

    /// `l_e(X)`.
    pub fn loads(&self, game: &CongestionGame) -> Vec<f64> {
        let mut loads = vec![0.0; game.edge_count()];
        add_choice_loads(game, &self.choices, &mut loads);
        loads
    }
}

fn add_choice_loads(game: &CongestionGame, choices: &[usize], loads: &mut [f64]) {
    let mass = game.mass();
    for (i, &s) in choices.iter().enumerate() {
        for &e in &game.paths(i)[s] {
            loads[e] += mass;
        }
    }
}

/// One independent ChaCha stream per player.
#[derive(Debug, Clone)]
pub struct PlayerStreams {
    streams: Vec<ChaCha8Rng>,
}

impl PlayerStreams {
    pub fn new(seed: u64, players: usize) -> Self {
        let streams = (0..players)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Self { streams }
    }

    pub fn player(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.streams[i]
    }
}

/// Cumulative choice probabilities `pi_{i,s} = n x_{i,s}`.
fn cumulative(game: &CongestionGame, x: &FlowProfile) -> Result<Vec<Vec<f64>>, BanditError> {
    let n = game.players() as f64;
    (0..game.players())
        .map(|i| {
            let mut total = 0.0;
            let cum: Vec<f64> = x
                .player(i)
                .iter()
                .map(|&w| {
                    total += n * w;
                    total
                })
                .collect();
            if (total - 1.0).abs() > 1e-9 || x.player(i).iter().any(|&w| w < 0.0) {
                return Err(BanditError::Probabilities {
                    player: i,
                    sum: total,
                });
            }
            Ok(cum)
        })
        .collect()
}

#[inline]
fn draw<R: Rng>(rng: &mut R, cum: &[f64]) -> usize {
    let u = rng.gen::<f64>() * cum[cum.len() - 1];
    match cum.iter().position(|&c| u < c) {
        Some(s) => s,
        // u fell on the rounding edge; take the last path with mass
        None => (0..cum.len())
            .rev()
            .find(|&s| cum[s] > if s == 0 { 0.0 } else { cum[s - 1] })
            .unwrap_or(cum.len() - 1),
    }
}

/// Player `i` picks path `s` with probability `n x_{i,s}`.
pub fn sample_choices(
    streams: &mut PlayerStreams,
    game: &CongestionGame,
    x: &FlowProfile,
) -> Result<ChoiceVector, BanditError> {
    game.edge_loads(x)?;
    let cum = cumulative(game, x)?;
    let choices = cum
        .iter()
        .enumerate()
        .map(|(i, c)| draw(streams.player(i), c))
        .collect();
    Ok(ChoiceVector { choices })
}

/// `ceil(nu n^2 ln(n d max(tau, 2)) / (Lambda m_path^2))`.
pub fn episode_length(
    nu: f64,
    players: usize,
    paths: usize,
    path_len: usize,
    lambda: f64,
    tau: usize,
) -> u64 {
    let n = players as f64;
    let log = (n * paths as f64 * tau.max(2) as f64).ln();
    let len = (path_len * path_len) as f64;
    (nu * n * n * log / (lambda * len)).ceil().max(1.0) as u64
}

/// `x_bar_{i,s} = (1 - |S_i| Lambda) x_{i,s} + Lambda / n`.
pub fn restrict_profile(
    game: &CongestionGame,
    x: &FlowProfile,
    lambda: f64,
) -> Result<FlowProfile, BanditError> {
    game.edge_loads(x)?;
    check_floor(game, lambda)?;
    let floor = lambda * game.mass();
    let blocks = x
        .blocks()
        .iter()
        .map(|block| {
            let keep = 1.0 - block.len() as f64 * lambda;
            block.iter().map(|&w| keep * w + floor).collect()
        })
        .collect();
    Ok(FlowProfile::from_blocks_unchecked(blocks))
}

fn check_floor(game: &CongestionGame, lambda: f64) -> Result<(), BanditError> {
    let paths = game.max_paths();
    if !(lambda.is_finite() && lambda > 0.0 && paths as f64 * lambda < 1.0) {
        return Err(BanditError::Floor { lambda, paths });
    }
    Ok(())
}

/// Where the per-episode gradient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientSource {
    /// Own-path cost averages over the episode.
    #[default]
    Sampled,
    /// `grad Phi(x^tau)` itself; no steps are played.
    Exact,
}

/// How to take expectations over choice vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixedMode {
    /// Every joint outcome, up to [`ENUMERATION_CAP`].
    Enumerate,
    /// Per-edge load distributions (exact at any size).
    Exact,
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct BanditConfig {
    pub geometry: GeometryKind,
    /// `Lambda`: every path is played with probability at least `Lambda`.
    pub floor_mix: f64,
    pub kappa: f64,
    pub nu: f64,
    /// `eta_i`; `None` means `1/λ` for every player.
    pub rates: Option<Vec<f64>>,
    pub episodes: usize,
    pub seed: u64,
    pub gradient: GradientSource,
    /// Keep every choice vector for replay.
    pub record_choices: bool,
    /// Mixed δ-gap per episode; `None` skips it.
    pub mixed: Option<MixedMode>,
    /// Added to `3 δ / θ` when judging the gap after `tau_0`.
    pub allowance: f64,
}

pub const DEFAULT_NU: f64 = 8.0;
pub const DEFAULT_KAPPA: f64 = 0.05;

impl BanditConfig {
    pub fn new(geometry: GeometryKind, floor_mix: f64, episodes: usize, seed: u64) -> Self {
        Self {
            geometry,
            floor_mix,
            kappa: DEFAULT_KAPPA,
            nu: DEFAULT_NU,
            rates: None,
            episodes,
            seed,
            gradient: GradientSource::Sampled,
            record_choices: false,
            mixed: Some(MixedMode::Exact),
            allowance: 0.0,
        }
    }

    /// The standard choice of `Lambda` for `geometry`, capped at `0.9/d`.
    /// The common rate is `1/λ`, lowered when needed so that `θ <= 1`.
    pub fn preset(
        game: &CongestionGame,
        geometry: GeometryKind,
        episodes: usize,
        seed: u64,
    ) -> Self {
        Self::preset_with(game, geometry, None, None, episodes, seed)
    }

    /// As [`BanditConfig::preset`] with a fixed common rate and an extra
    /// cap on `Lambda`.
    pub fn preset_with(
        game: &CongestionGame,
        geometry: GeometryKind,
        eta: Option<f64>,
        lambda_cap: Option<f64>,
        episodes: usize,
        seed: u64,
    ) -> Self {
        let n = game.players() as f64;
        let eps = accuracy_target(game);
        let cap = lambda_cap.map_or(f64::INFINITY, |c| c.max(0.0));
        let floor_for = |eta: f64| preset_floor(game, geometry, eta).min(cap);
        let theta_for = |eta: f64| {
            let gamma = geometry_gamma(geometry, floor_for(eta), n);
            (eta * gamma * eps * n).sqrt()
        };
        let eta = eta.unwrap_or_else(|| {
            let limit = 1.0 / game.smoothness_params().lambda;
            if theta_for(limit) <= 1.0 {
                return limit;
            }
            // bisect on ln(eta): theta grows with eta for both presets
            let (mut lo, mut hi) = (limit * 1e-12, limit);
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if theta_for(mid) > 1.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            log::info!("lowering η from 1/λ = {limit} to {lo} so that θ <= 1");
            lo
        });
        let mut config = Self::new(geometry, floor_for(eta), episodes, seed);
        config.rates = Some(vec![eta; game.players()]);
        config
    }

    pub fn derive(&self, game: &CongestionGame) -> Result<BanditParams, BanditError> {
        check_floor(game, self.floor_mix)?;
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(BanditError::Kappa(self.kappa));
        }
        if !(self.nu >= 1.0 && self.nu.is_finite()) {
            return Err(BanditError::Nu(self.nu));
        }
        let s = game.smoothness_params();
        let limit = 1.0 / s.lambda;
        let rates = match &self.rates {
            None => vec![limit; game.players()],
            Some(r) if r.len() != game.players() => {
                return Err(BanditError::RateCount {
                    expected: game.players(),
                    found: r.len(),
                })
            }
            Some(r) => r.clone(),
        };
        for (player, &eta) in rates.iter().enumerate() {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(BanditError::InvalidRate { player, eta });
            }
            if eta > limit * (1.0 + 1e-12) {
                return Err(BanditError::RateExceedsSmoothness { player, eta, limit });
            }
        }
        let eta = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let n = game.players() as f64;
        let d = game.max_paths() as f64;
        let epsilon = accuracy_target(game);
        let gamma = geometry_gamma(self.geometry, self.floor_mix, n);
        let theta = (eta * gamma * epsilon * n).sqrt();
        if theta > 1.0 {
            return Err(BanditError::Theta(theta));
        }
        let delta = 6.0 * epsilon + theta * s.beta * d * self.floor_mix;
        Ok(BanditParams {
            epsilon,
            gamma,
            rates,
            eta,
            theta,
            delta,
            threshold: 3.0 * delta / theta,
            descent_threshold: 2.0 * delta / theta,
            tau0: s.alpha / delta,
            alpha: s.alpha,
            floor: self.floor_mix * game.mass(),
        })
    }

    pub fn episode_length(&self, game: &CongestionGame, tau: usize) -> u64 {
        episode_length(
            self.nu,
            game.players(),
            game.max_paths(),
            game.max_path_len(),
            self.floor_mix,
            tau,
        )
    }
}

/// Euclidean: `min(sqrt(ϵ/(2ηn))/(βd), 0.9/d)`; entropy:
/// `min((ϵ/(ηβ²d²))^(1/3), 0.9/d)`.
pub fn preset_floor(game: &CongestionGame, geometry: GeometryKind, eta: f64) -> f64 {
    let beta = game.smoothness_params().beta;
    let n = game.players() as f64;
    let d = game.max_paths() as f64;
    let eps = accuracy_target(game);
    let floor = match geometry {
        GeometryKind::Euclidean => (eps / (2.0 * eta * n)).sqrt() / (beta * d),
        GeometryKind::Entropy => (eps / (eta * beta * beta * d * d)).cbrt(),
    };
    floor.min(0.9 / d)
}

/// `4 b m_path / n`.
pub fn accuracy_target(game: &CongestionGame) -> f64 {
    4.0 * game.b() * game.max_path_len() as f64 / game.players() as f64
}

fn geometry_gamma(geometry: GeometryKind, floor_mix: f64, n: f64) -> f64 {
    match geometry {
        GeometryKind::Euclidean => 2.0,
        GeometryKind::Entropy => floor_mix / n,
    }
}

/// Quantities derived from a [`BanditConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct BanditParams {
    /// `ϵ = 4 b m_path / n`.
    pub epsilon: f64,
    /// `Γ`.
    pub gamma: f64,
    pub rates: Vec<f64>,
    pub eta: f64,
    pub theta: f64,
    /// `δ = 6 ϵ + θ β d Λ`.
    pub delta: f64,
    /// `3 δ / θ`.
    pub threshold: f64,
    /// `2 δ / θ`.
    pub descent_threshold: f64,
    /// `α / δ`.
    pub tau0: f64,
    pub alpha: f64,
    /// `Λ / n`.
    pub floor: f64,
}

/// One player's visit counts and cost sums over an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub steps: u64,
    pub profile: FlowProfile,
    /// `|T_{i,s}|`.
    pub visits: Vec<Vec<u64>>,
    pub cost_sums: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
    /// Entries that fell back to the previous estimate.
    pub fallback_entries: usize,
    /// `max_i |g_hat_i - grad_i Phi(x^tau)|_inf`.
    pub estimate_error: f64,
    pub phi: f64,
    pub phi_gap: f64,
    pub delta_mixed: Option<f64>,
}

impl EpisodeRecord {
    pub const CSV_HEADER: &'static str =
        "episode,steps,phi,phi_gap,max_est_error,delta_mixed,theorem_threshold";
}

/// `g_hat_{i,s}` = mean observed cost of `s`; unvisited entries reuse
/// `previous` (zero when absent). Returns the estimate and the number of
/// fallback entries.
pub fn estimate_gradient(
    visits: &[Vec<u64>],
    cost_sums: &[Vec<f64>],
    previous: Option<&[Vec<f64>]>,
) -> (Vec<Vec<f64>>, usize) {
    let mut fallbacks = 0;
    let estimate = visits
        .iter()
        .zip(cost_sums)
        .enumerate()
        .map(|(i, (v, c))| {
            v.iter()
                .zip(c)
                .enumerate()
                .map(|(s, (&count, &sum))| {
                    if count > 0 {
                        sum / count as f64
                    } else {
                        fallbacks += 1;
                        previous.map_or(0.0, |p| p[i][s])
                    }
                })
                .collect()
        })
        .collect();
    (estimate, fallbacks)
}

/// Plays `steps` steps at the fixed profile behind `cum`.
fn play_episode(
    game: &CongestionGame,
    cum: &[Vec<f64>],
    steps: u64,
    streams: &mut PlayerStreams,
    mut log: Option<&mut Vec<u32>>,
) -> (Vec<Vec<u64>>, Vec<Vec<f64>>) {
    let n = game.players();
    let mut visits: Vec<Vec<u64>> = (0..n).map(|i| vec![0; game.path_count(i)]).collect();
    let mut sums: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; game.path_count(i)]).collect();
    let mut choices = vec![0usize; n];
    let mut loads = vec![0.0; game.edge_count()];
    let edges = game.edges();
    for _ in 0..steps {
        for (i, c) in cum.iter().enumerate() {
            choices[i] = draw(streams.player(i), c);
        }
        loads.iter_mut().for_each(|l| *l = 0.0);
        add_choice_loads(game, &choices, &mut loads);
        for (i, &s) in choices.iter().enumerate() {
            let cost: f64 = game.paths(i)[s]
                .iter()
                .map(|&e| edges[e].eval(loads[e]))
                .sum();
            visits[i][s] += 1;
            sums[i][s] += cost;
        }
        if let Some(log) = log.as_deref_mut() {
            log.extend(choices.iter().map(|&s| s as u32));
        }
    }
    (visits, sums)
}

/// Visit counts and own-path cost sums of `steps` steps at the fixed
/// profile `x`.
pub fn observe_episode(
    game: &CongestionGame,
    x: &FlowProfile,
    steps: u64,
    streams: &mut PlayerStreams,
) -> Result<(Vec<Vec<u64>>, Vec<Vec<f64>>), BanditError> {
    game.edge_loads(x)?;
    let cum = cumulative(game, x)?;
    Ok(play_episode(game, &cum, steps, streams, None))
}

/// Choice vectors of one episode, flattened step-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeChoices {
    pub episode: usize,
    pub choices: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct BanditReport {
    pub params: BanditParams,
    pub episodes: Vec<EpisodeRecord>,
    pub final_profile: FlowProfile,
    pub final_phi: f64,
    pub phi_q: f64,
    pub reference_certificate: f64,
    /// Entries below `Lambda/n - FLOOR_TOL` across all iterates.
    pub floor_violations: usize,
    pub replay: Vec<EpisodeChoices>,
    pub allowance: f64,
}

/// Outcome of the per-episode descent checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DescentSummary {
    /// Transitions whose estimate had no fallback and error at most `ϵ`.
    pub eligible: usize,
    /// Eligible transitions satisfying the descent inequality.
    pub passed: usize,
    /// Eligible transitions starting from gap at least `2 δ / θ`.
    pub large_gap: usize,
    /// Of those, transitions decreasing `Phi` by at least `δ`.
    pub large_gap_decreased: usize,
}

impl BanditReport {
    /// `Phi` after each episode's update, aligned with `episodes`.
    pub fn next_phi(&self, index: usize) -> f64 {
        self.episodes
            .get(index + 1)
            .map_or(self.final_phi, |r| r.phi)
    }

    pub fn descent_summary(&self) -> DescentSummary {
        let p = &self.params;
        let mut summary = DescentSummary::default();
        for (index, record) in self.episodes.iter().enumerate() {
            if record.fallback_entries > 0 || record.estimate_error > p.epsilon {
                continue;
            }
            summary.eligible += 1;
            let next = self.next_phi(index);
            if descent_step_check(record.phi, next, self.phi_q, p.theta, p.delta) {
                summary.passed += 1;
            }
            if record.phi_gap >= p.descent_threshold {
                summary.large_gap += 1;
                if next <= record.phi - p.delta + DESCENT_TOL {
                    summary.large_gap_decreased += 1;
                }
            }
        }
        summary
    }

    /// Every episode numbered at least `tau_0` has gap at most `3 δ / θ`
    /// plus the allowance; `None` when the run never reached `tau_0`.
    pub fn gap_after_tau0_holds(&self) -> Option<bool> {
        let start = self.params.tau0.ceil().max(1.0) as usize;
        let limit = self.params.threshold + self.allowance;
        let tail: Vec<_> = self
            .episodes
            .iter()
            .filter(|r| r.episode >= start)
            .collect();
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().all(|r| r.phi_gap <= limit))
    }

    /// After the first episode with gap below `2 δ / θ`, no later gap exceeds
    /// `3 δ / θ` plus the allowance; `None` when no episode got that low.
    pub fn permanence_holds(&self) -> Option<bool> {
        let first = self
            .episodes
            .iter()
            .position(|r| r.phi_gap < self.params.descent_threshold)?;
        let limit = self.params.threshold + self.allowance;
        Some(self.episodes[first..].iter().all(|r| r.phi_gap <= limit))
    }

    pub fn max_estimate_error(&self) -> f64 {
        self.episodes
            .iter()
            .map(|r| r.estimate_error)
            .fold(0.0, f64::max)
    }
}

/// Passes iff `phi_next <= phi_prev - theta (phi_prev - phi_q) + delta`.
pub fn descent_step_check(
    phi_prev: f64,
    phi_next: f64,
    phi_q: f64,
    theta: f64,
    delta: f64,
) -> bool {
    phi_next <= phi_prev - theta * (phi_prev - phi_q) + delta + DESCENT_TOL
}

pub fn run_bandit(
    game: &CongestionGame,
    config: &BanditConfig,
) -> Result<BanditReport, BanditError> {
    let reference = minimize::minimize_potential(game, 0.0, crate::bulletin::REFERENCE_TOL);
    run_bandit_with(game, config, &reference)
}

/// As [`run_bandit`] with a precomputed `q = argmin Phi`.
pub fn run_bandit_with(
    game: &CongestionGame,
    config: &BanditConfig,
    reference: &Minimum,
) -> Result<BanditReport, BanditError> {
    let params = config.derive(game)?;
    let geo = config.geometry;
    let mass = game.mass();
    let sets: Vec<FeasibleSet> = (0..game.players())
        .map(|i| FeasibleSet::new(game.path_count(i), mass, params.floor))
        .collect::<Result<_, _>>()?;
    let phi_q = reference.value;
    let mut streams = PlayerStreams::new(config.seed, game.players());
    let mut x = restrict_profile(game, &FlowProfile::uniform(game), config.floor_mix)?;
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let mut records = Vec::with_capacity(config.episodes);
    let mut replay = Vec::new();
    let mut floor_violations = 0;

    for tau in 1..=config.episodes {
        floor_violations += x
            .blocks()
            .iter()
            .flatten()
            .filter(|&&w| w < params.floor - FLOOR_TOL)
            .count();
        let loads = game.loads_unchecked(x.blocks());
        let exact = game.path_costs_at(&loads);
        let phi = game.potential_at(&loads);
        let (steps, visits, cost_sums, estimate, fallback_entries) = match config.gradient {
            GradientSource::Exact => {
                let zeros = exact.iter().map(|g| vec![0; g.len()]).collect();
                (0, zeros, exact.clone(), exact.clone(), 0)
            }
            GradientSource::Sampled => {
                let steps = config.episode_length(game, tau);
                let cum = cumulative(game, &x)?;
                let mut log = config.record_choices.then(Vec::new);
                let (visits, sums) = play_episode(game, &cum, steps, &mut streams, log.as_mut());
                if let Some(choices) = log {
                    replay.push(EpisodeChoices {
                        episode: tau,
                        choices,
                    });
                }
                let (estimate, fallbacks) = estimate_gradient(&visits, &sums, previous.as_deref());
                (steps, visits, sums, estimate, fallbacks)
            }
        };
        let estimate_error = estimate
            .iter()
            .flatten()
            .zip(exact.iter().flatten())
            .map(|(g, c)| (g - c).abs())
            .fold(0.0, f64::max);
        let delta_mixed = match config.mixed {
            Some(mode) => Some(mixed_delta_gap(game, &x, mode)?.delta),
            None => None,
        };
        log::debug!(
            "episode {tau}: {steps} steps, phi gap {:e}, error {estimate_error:e}",
            phi - phi_q
        );

        let mut next = Vec::with_capacity(game.players());
        for i in 0..game.players() {
            next.push(geo.mirror_step(&sets[i], x.player(i), &estimate[i], params.rates[i])?);
        }
        records.push(EpisodeRecord {
            episode: tau,
            steps,
            profile: x,
            visits,
            cost_sums,
            estimate: estimate.clone(),
            fallback_entries,
            estimate_error,
            phi,
            phi_gap: phi - phi_q,
            delta_mixed,
        });
        previous = Some(estimate);
        x = FlowProfile::from_blocks_unchecked(next);
    }
    floor_violations += x
        .blocks()
        .iter()
        .flatten()
        .filter(|&&w| w < params.floor - FLOOR_TOL)
        .count();
    let final_phi = game.potential_at(&game.loads_unchecked(x.blocks()));
    Ok(BanditReport {
        params,
        episodes: records,
        final_profile: x,
        final_phi,
        phi_q,
        reference_certificate: reference.certificate,
        floor_violations,
        replay,
        allowance: config.allowance,
    })
}

/// Recomputes visit counts and cost sums from recorded choices.
pub fn replay_episode(
    game: &CongestionGame,
    choices: &EpisodeChoices,
) -> Result<(Vec<Vec<u64>>, Vec<Vec<f64>>), BanditError> {
    let n = game.players();
    if choices.choices.len() % n != 0 {
        return Err(BanditError::Replay(format!(
            "episode {}: {} entries is not a multiple of {n} players",
            choices.episode,
            choices.choices.len()
        )));
    }
    let mut visits: Vec<Vec<u64>> = (0..n).map(|i| vec![0; game.path_count(i)]).collect();
    let mut sums: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; game.path_count(i)]).collect();
    let mut loads = vec![0.0; game.edge_count()];
    let edges = game.edges();
    for step in choices.choices.chunks(n) {
        let step: Vec<usize> = step.iter().map(|&s| s as usize).collect();
        for (player, &path) in step.iter().enumerate() {
            let count = game.path_count(player);
            if path >= count {
                return Err(BanditError::BadChoice {
                    player,
                    path,
                    count,
                });
            }
        }
        loads.iter_mut().for_each(|l| *l = 0.0);
        add_choice_loads(game, &step, &mut loads);
        for (i, &s) in step.iter().enumerate() {
            visits[i][s] += 1;
            sums[i][s] += game.paths(i)[s]
                .iter()
                .map(|&e| edges[e].eval(loads[e]))
                .sum::<f64>();
        }
    }
    Ok((visits, sums))
}

/// One line per step: `episode choice_0 choice_1 ...`.
pub fn write_replay<W: Write>(
    mut out: W,
    players: usize,
    log: &[EpisodeChoices],
) -> io::Result<()> {
    for episode in log {
        for step in episode.choices.chunks(players.max(1)) {
            write!(out, "{}", episode.episode)?;
            for s in step {
                write!(out, " {s}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()
}

pub fn read_replay<R: BufRead>(
    input: R,
    players: usize,
) -> Result<Vec<EpisodeChoices>, BanditError> {
    let mut log: Vec<EpisodeChoices> = Vec::new();
    for (number, line) in input.lines().enumerate() {
        let line = line.map_err(|e| BanditError::Replay(e.to_string()))?;
        let bad = |what: &str| BanditError::Replay(format!("line {}: {what}", number + 1));
        let mut fields = line.split_whitespace();
        let Some(head) = fields.next() else { continue };
        let episode: usize = head.parse().map_err(|_| bad("bad episode number"))?;
        let step: Vec<u32> = fields
            .map(|f| f.parse().map_err(|_| bad("bad path index")))
            .collect::<Result<_, _>>()?;
        if step.len() != players {
            return Err(bad("wrong number of choices"));
        }
        match log.last_mut() {
            Some(last) if last.episode == episode => last.choices.extend(step),
            _ => log.push(EpisodeChoices {
                episode,
                choices: step,
            }),
        }
    }
    Ok(log)
}

/// Mixed δ-gap with its expectation table.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedGap {
    pub delta: f64,
    /// `E[c_s(X)]` per player and path.
    pub expected: Vec<Vec<f64>>,
    /// Half-width of the 3σ band around each entry (zero when exact).
    pub half_width: f64,
}

/// `E[c_s(X)]` for every `(i, s)` from the exact distribution of each edge's
/// user count.
pub fn expected_path_costs(
    game: &CongestionGame,
    x: &FlowProfile,
) -> Result<Vec<Vec<f64>>, BanditError> {
    game.edge_loads(x)?;
    let n = game.players();
    let mut edge_expect = vec![0.0; game.edge_count()];
    for (e, cost) in game.edges().iter().enumerate() {
        // distribution of the number of players whose path uses e
        let mut dist = vec![0.0; n + 1];
        dist[0] = 1.0;
        let mut reach = 0;
        for j in 0..n {
            let p: f64 = game
                .paths(j)
                .iter()
                .zip(x.player(j))
                .filter(|(s, _)| s.binary_search(&e).is_ok())
                .map(|(_, &w)| w * n as f64)
                .sum::<f64>()
                .clamp(0.0, 1.0);
            if p == 0.0 {
                continue;
            }
            reach += 1;
            for k in (1..=reach).rev() {
                dist[k] = dist[k] * (1.0 - p) + dist[k - 1] * p;
            }
            dist[0] *= 1.0 - p;
        }
        edge_expect[e] = dist
            .iter()
            .enumerate()
            .map(|(k, &pk)| pk * cost.eval(k as f64 / n as f64))
            .sum();
    }
    Ok(game
        .all_paths()
        .iter()
        .map(|list| {
            list.iter()
                .map(|s| s.iter().map(|&e| edge_expect[e]).sum())
                .collect()
        })
        .collect())
}

/// `E[c_s(X)]` by summing over every joint outcome.
pub fn enumerate_path_costs(
    game: &CongestionGame,
    x: &FlowProfile,
) -> Result<Vec<Vec<f64>>, BanditError> {
    game.edge_loads(x)?;
    let outcomes: u128 = (0..game.players())
        .map(|i| game.path_count(i) as u128)
        .product();
    if outcomes > ENUMERATION_CAP as u128 {
        return Err(BanditError::EnumerationCap { outcomes });
    }
    let n = game.players();
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|i| x.player(i).iter().map(|&w| w * n as f64).collect())
        .collect();
    let mut expected: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; game.path_count(i)]).collect();
    let mut choice = vec![0usize; n];
    let mut loads = vec![0.0; game.edge_count()];
    loop {
        let weight: f64 = choice
            .iter()
            .enumerate()
            .map(|(i, &s)| probs[i][s])
            .product();
        if weight > 0.0 {
            loads.iter_mut().for_each(|l| *l = 0.0);
            add_choice_loads(game, &choice, &mut loads);
            let costs = game.path_costs_at(&loads);
            for (row, c) in expected.iter_mut().zip(&costs) {
                for (acc, v) in row.iter_mut().zip(c) {
                    *acc += weight * v;
                }
            }
        }
        // odometer
        let mut i = 0;
        loop {
            if i == n {
                return Ok(expected);
            }
            choice[i] += 1;
            if choice[i] < game.path_count(i) {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// `max_i [max_{s used} E[c_s(X)] - min_{s'} E[c_{s'}(X)]]`, floored at 0.
pub fn mixed_delta_gap(
    game: &CongestionGame,
    x: &FlowProfile,
    mode: MixedMode,
) -> Result<MixedGap, BanditError> {
    let (expected, half_width) = match mode {
        MixedMode::Exact => (expected_path_costs(game, x)?, 0.0),
        MixedMode::Enumerate => (enumerate_path_costs(game, x)?, 0.0),
        MixedMode::MonteCarlo { samples, seed } => monte_carlo_path_costs(game, x, samples, seed)?,
    };
    let mut delta: f64 = 0.0;
    for (i, row) in expected.iter().enumerate() {
        let cheapest = row.iter().copied().fold(f64::INFINITY, f64::min);
        let used = row
            .iter()
            .zip(x.player(i))
            .filter(|(_, &w)| w > SUPPORT_THRESHOLD)
            .map(|(&c, _)| c)
            .fold(f64::NEG_INFINITY, f64::max);
        delta = delta.max(used - cheapest);
    }
    Ok(MixedGap {
        delta,
        expected,
        half_width,
    })
}

fn monte_carlo_path_costs(
    game: &CongestionGame,
    x: &FlowProfile,
    samples: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, f64), BanditError> {
    let cum = cumulative(game, x)?;
    let mut streams = PlayerStreams::new(seed, game.players());
    let n = game.players();
    let mut sum: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; game.path_count(i)]).collect();
    let mut sum_sq = sum.clone();
    let mut choices = vec![0usize; n];
    let mut loads = vec![0.0; game.edge_count()];
    let samples = samples.max(2);
    for _ in 0..samples {
        for (i, c) in cum.iter().enumerate() {
            choices[i] = draw(streams.player(i), c);
        }
        loads.iter_mut().for_each(|l| *l = 0.0);
        add_choice_loads(game, &choices, &mut loads);
        let costs = game.path_costs_at(&loads);
        for ((s_row, q_row), c_row) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&costs) {
            for ((s, q), c) in s_row.iter_mut().zip(q_row.iter_mut()).zip(c_row) {
                *s += c;
                *q += c * c;
            }
        }
    }
    let count = samples as f64;
    let mut worst_sd: f64 = 0.0;
    let mean = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s_row, q_row)| {
            s_row
                .iter()
                .zip(q_row)
                .map(|(s, q)| {
                    let m = s / count;
                    let var = ((q / count - m * m) * count / (count - 1.0)).max(0.0);
                    worst_sd = worst_sd.max((var / count).sqrt());
                    m
                })
                .collect()
        })
        .collect();
    Ok((mean, 3.0 * worst_sd))
}
