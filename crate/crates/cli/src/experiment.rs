//! Experiment specs, dispatch and CSV output.

use std::fmt::{self, Write as _};
use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use mirror_congestion::bandit::{self, BanditConfig, EpisodeRecord};
use mirror_congestion::bulletin::{self, BulletinConfig, Reference, StepRecord};
use mirror_congestion::format::parse_game;
use mirror_congestion::generate::{generate_random_game, GenParams};
use mirror_congestion::minimize::minimize_max_cost;
use mirror_congestion::{CongestionGame, GeometryKind};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_EPISODES: usize = 10;
/// Bulletin runs keep about this many CSV rows unless told otherwise.
pub const TARGET_ROWS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub enum GameSource {
    File(PathBuf),
    Generated { params: GenParams, seed: u64 },
}

impl GameSource {
    pub fn load(&self) -> Result<CongestionGame> {
        match self {
            GameSource::File(path) => Ok(parse_game(path)?),
            GameSource::Generated { params, seed } => Ok(generate_random_game(*seed, params)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    BulletinGd,
    BulletinMu,
    BanditGd,
    BanditMu,
}

impl Algorithm {
    pub fn geometry(self) -> GeometryKind {
        match self {
            Algorithm::BulletinGd | Algorithm::BanditGd => GeometryKind::Euclidean,
            Algorithm::BulletinMu | Algorithm::BanditMu => GeometryKind::Entropy,
        }
    }

    pub fn is_bandit(self) -> bool {
        matches!(self, Algorithm::BanditGd | Algorithm::BanditMu)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::BulletinGd => "bulletin-gd",
            Algorithm::BulletinMu => "bulletin-mu",
            Algorithm::BanditGd => "bandit-gd",
            Algorithm::BanditMu => "bandit-mu",
        })
    }
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bulletin-gd" => Algorithm::BulletinGd,
            "bulletin-mu" => Algorithm::BulletinMu,
            "bandit-gd" => Algorithm::BanditGd,
            "bandit-mu" => Algorithm::BanditMu,
            _ => bail!("unknown algorithm `{s}`"),
        })
    }
}

/// Which social cost a `σ` target refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SocialCost {
    #[default]
    Average,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Epsilon(f64),
    Sigma { sigma: f64, cost: SocialCost },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: GameSource,
    pub algorithm: Algorithm,
    pub target: Option<Target>,
    /// Common learning rate; `1/λ` when absent.
    pub eta: Option<f64>,
    pub lambda_cap: Option<f64>,
    pub kappa: f64,
    pub nu: f64,
    pub steps: Option<usize>,
    pub episodes: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record_every: Option<usize>,
    pub assert: bool,
}

impl ExperimentSpec {
    pub fn new(source: GameSource, algorithm: Algorithm) -> Self {
        Self {
            source,
            algorithm,
            target: None,
            eta: None,
            lambda_cap: None,
            kappa: bandit::DEFAULT_KAPPA,
            nu: bandit::DEFAULT_NU,
            steps: None,
            episodes: None,
            seed: 0,
            out: None,
            replay: None,
            record_every: None,
            assert: true,
        }
    }

    /// `ε` for a bulletin run: given directly, or `aσ/(2m)` for `C_A` and
    /// `aσ²/(32m)` for `C_M`.
    pub fn epsilon(&self, game: &CongestionGame) -> f64 {
        let m = game.edge_count() as f64;
        match self.target {
            None => DEFAULT_EPSILON,
            Some(Target::Epsilon(eps)) => eps,
            Some(Target::Sigma {
                sigma,
                cost: SocialCost::Average,
            }) => game.a() * sigma / (2.0 * m),
            Some(Target::Sigma {
                sigma,
                cost: SocialCost::Max,
            }) => game.a() * sigma * sigma / (32.0 * m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: &'static str,
    /// `None` when the assertion did not apply to this run.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Assertion {
    fn check(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed: Some(passed),
            detail,
        }
    }

    fn skip(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: None,
            detail,
        }
    }

    fn label(&self) -> &'static str {
        match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub csv: String,
    pub summary: String,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    /// No enabled assertion failed.
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed != Some(false))
    }
}

/// 12 significant digits.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// Runs the experiment and writes the CSV to `spec.out` when set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    let game = spec.source.load()?;
    let mut outcome = if spec.algorithm.is_bandit() {
        run_bandit_experiment(spec, &game)?
    } else {
        run_bulletin_experiment(spec, &game)?
    };
    if !spec.assert {
        outcome.assertions.clear();
    }
    let verdicts: Vec<String> = outcome
        .assertions
        .iter()
        .map(|a| format!("{}={} ({})", a.name, a.label(), a.detail))
        .collect();
    if !verdicts.is_empty() {
        outcome.summary = format!("{} | {}", outcome.summary, verdicts.join(" "));
    }
    if let Some(path) = &spec.out {
        fs::write(path, &outcome.csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(outcome)
}

fn common_rates(spec: &ExperimentSpec, game: &CongestionGame) -> Option<Vec<f64>> {
    spec.eta.map(|eta| vec![eta; game.players()])
}

fn run_bulletin_experiment(spec: &ExperimentSpec, game: &CongestionGame) -> Result<Outcome> {
    if spec.episodes.is_some() {
        bail!("--episodes applies to bandit runs; use --steps");
    }
    let geometry = spec.algorithm.geometry();
    let eps = spec.epsilon(game);
    if !(eps.is_finite() && eps > 0.0) {
        bail!("target gap ε = {eps} must be positive");
    }
    let mut config = BulletinConfig::new(geometry, eps, 0);
    config.rates = common_rates(spec, game);
    let rates = config.resolve_rates(game)?;
    let eta = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let n = game.players() as f64;
    let closed_form_gamma = match geometry {
        GeometryKind::Euclidean => 2.0 / (n * n),
        GeometryKind::Entropy => (game.max_paths() as f64 * n).ln(),
    };
    let budget = (n * closed_form_gamma / (eta * eps)).ceil() as usize;
    config.max_steps = spec.steps.unwrap_or(budget);
    config.record_every = spec
        .record_every
        .unwrap_or_else(|| config.max_steps.div_ceil(TARGET_ROWS).max(1));

    let reference = Reference::compute(game);
    let report = bulletin::run_bulletin_with(game, &config, &reference)?;
    let last = report.steps.last().expect("a run records its last step");

    let mut csv = String::new();
    csv.push_str(StepRecord::CSV_HEADER);
    csv.push('\n');
    for r in &report.steps {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.step,
            num(r.phi),
            num(r.phi_gap),
            num(r.delta_gap),
            num(r.c_avg),
            num(r.c_max),
            num(r.ratio_avg),
            num(r.bound_avg)
        );
    }

    let certified = report.final_certified_gap();
    let mut assertions = Vec::new();
    if config.max_steps >= budget {
        assertions.push(Assertion::check(
            "convergence",
            certified <= eps,
            format!(
                "certified gap {certified:.3e} <= ε {eps:.3e} at T = {}",
                report.final_step
            ),
        ));
    } else {
        assertions.push(Assertion::skip(
            "convergence",
            format!(
                "T = {} below the closed-form budget {budget}",
                config.max_steps
            ),
        ));
    }
    assertions.push(Assertion::check(
        "monotone",
        report.monotone_violations == 0,
        format!("{} ascents above 1e-10", report.monotone_violations),
    ));
    assertions.push(Assertion::check(
        "delta-equilibrium",
        report.delta_violations == 0,
        format!(
            "{} steps above sqrt(8bm gap) + 1e-6, {} with mass-qualified paths",
            report.delta_violations, report.qualified_delta_violations
        ),
    ));

    let bracket = match spec.target {
        Some(Target::Sigma {
            cost: SocialCost::Max,
            ..
        }) => {
            if !game.is_symmetric() {
                bail!("{}", bulletin::BulletinError::AsymmetricGame);
            }
            Some(minimize_max_cost(game, bulletin::REFERENCE_TOL))
        }
        _ => None,
    };
    let ratios =
        bulletin::social_ratio_report(game, &report.final_profile, &reference, bracket.as_ref())?;
    let (a, b) = (game.a(), game.b());
    match spec.target {
        Some(Target::Sigma {
            sigma,
            cost: SocialCost::Average,
        }) => {
            let bound = (b / a) * (1.0 + sigma);
            assertions.push(Assertion::check(
                "ratio-avg",
                ratios.ratio_avg <= bound,
                format!(
                    "C_A ratio {:.6} <= (b/a)(1+σ) = {bound:.6}",
                    ratios.ratio_avg
                ),
            ));
        }
        Some(Target::Sigma {
            sigma,
            cost: SocialCost::Max,
        }) => {
            let ratio = ratios.ratio_max.unwrap_or(f64::INFINITY);
            let bound = ratios.bound_max.unwrap_or(0.0);
            assertions.push(Assertion::check(
                "ratio-max",
                ratio <= bound,
                format!(
                    "C_M ratio {ratio:.6} <= {bound:.6}; (b/a)(1+σ) = {:.6}",
                    (b / a) * (1.0 + sigma)
                ),
            ));
        }
        _ => assertions.push(Assertion::check(
            "ratio-avg",
            ratios.average_holds(),
            format!(
                "C_A ratio {:.6} <= {:.6}",
                ratios.ratio_avg, ratios.bound_avg
            ),
        )),
    }

    let summary = format!(
        "algo={} n={} m={} d={} eps={} eta={} T={} budget={} theorem_budget={:.1} final_gap={} certified_gap={} delta_gap={} delta_bound={} ratio_avg={} bound_avg={}{}",
        spec.algorithm,
        game.players(),
        game.edge_count(),
        game.max_paths(),
        num(eps),
        num(eta),
        report.final_step,
        budget,
        report.theorem_budget,
        num(last.phi_gap),
        num(certified),
        num(last.delta_gap),
        num(bulletin::delta_bound(game, last.phi_gap)),
        num(ratios.ratio_avg),
        num(ratios.bound_avg),
        match ratios.ratio_max {
            Some(r) => format!(" ratio_max={} bound_max={}", num(r), num(ratios.bound_max.unwrap_or(f64::NAN))),
            None => String::new(),
        }
    );
    Ok(Outcome {
        csv,
        summary,
        assertions,
    })
}

fn run_bandit_experiment(spec: &ExperimentSpec, game: &CongestionGame) -> Result<Outcome> {
    match spec.target {
        Some(Target::Epsilon(_)) => {
            bail!("bandit accuracy ϵ is fixed to 4 b m / n and cannot be set")
        }
        Some(Target::Sigma { .. }) => bail!("σ targets apply to bulletin runs"),
        None => {}
    }
    if spec.steps.is_some() {
        bail!("--steps applies to bulletin runs; use --episodes");
    }
    let episodes = spec.episodes.unwrap_or(DEFAULT_EPISODES);
    let mut config = BanditConfig::preset_with(
        game,
        spec.algorithm.geometry(),
        spec.eta,
        spec.lambda_cap,
        episodes,
        spec.seed,
    );
    config.kappa = spec.kappa;
    config.nu = spec.nu;
    config.record_choices = spec.replay.is_some();
    let report = bandit::run_bandit(game, &config)?;
    let p = &report.params;

    if let Some(path) = &spec.replay {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        bandit::write_replay(BufWriter::new(file), game.players(), &report.replay)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let mut csv = String::new();
    csv.push_str(EpisodeRecord::CSV_HEADER);
    csv.push('\n');
    for r in &report.episodes {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.episode,
            r.steps,
            num(r.phi),
            num(r.phi_gap),
            num(r.estimate_error),
            r.delta_mixed.map(num).unwrap_or_default(),
            num(p.threshold)
        );
    }

    let mut assertions = vec![Assertion::check(
        "floor",
        report.floor_violations == 0,
        format!("{} entries below Λ/n", report.floor_violations),
    )];
    assertions.push(match report.gap_after_tau0_holds() {
        Some(ok) => Assertion::check(
            "gap-after-tau0",
            ok,
            format!(
                "gap <= 3δ/θ = {:.4} from episode {}",
                p.threshold,
                p.tau0.ceil().max(1.0)
            ),
        ),
        None => Assertion::skip(
            "gap-after-tau0",
            format!("run ended before τ₀ = {:.2}", p.tau0),
        ),
    });
    if let Some(ok) = report.permanence_holds() {
        assertions.push(Assertion::check(
            "permanence",
            ok,
            "gap stays <= 3δ/θ after first dropping below 2δ/θ".into(),
        ));
    }
    let descent = report.descent_summary();
    assertions.push(Assertion::check(
        "descent",
        descent.passed == descent.eligible && descent.large_gap_decreased == descent.large_gap,
        format!(
            "{}/{} eligible episodes descend, {}/{} large-gap episodes drop by δ",
            descent.passed, descent.eligible, descent.large_gap_decreased, descent.large_gap
        ),
    ));

    let within = report
        .episodes
        .iter()
        .filter(|r| r.estimate_error <= p.epsilon)
        .count();
    let last = report.episodes.last();
    let summary = format!(
        "algo={} n={} m={} d={} episodes={} steps={} epsilon={} eta={} Lambda={} theta={} delta={} threshold={} tau0={} final_gap={} delta_mixed={} within_eps={}/{} (1-2κ = {:.3})",
        spec.algorithm,
        game.players(),
        game.edge_count(),
        game.max_paths(),
        report.episodes.len(),
        report.episodes.iter().map(|r| r.steps).sum::<u64>(),
        num(p.epsilon),
        num(p.eta),
        num(config.floor_mix),
        num(p.theta),
        num(p.delta),
        num(p.threshold),
        num(p.tau0),
        num(report.final_phi - report.phi_q),
        last.and_then(|r| r.delta_mixed).map(num).unwrap_or_default(),
        within,
        report.episodes.len(),
        1.0 - 2.0 * config.kappa,
    );
    Ok(Outcome {
        csv,
        summary,
        assertions,
    })
}
