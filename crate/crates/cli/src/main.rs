use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use congestion_sim::{run_experiment, Algorithm, ExperimentSpec, GameSource, SocialCost, Target};
use mirror_congestion::generate::GenParams;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algo {
    BulletinGd,
    BulletinMu,
    BanditGd,
    BanditMu,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Social {
    Avg,
    Max,
}

/// Simulate mirror-descent dynamics on a congestion game.
#[derive(Debug, Parser)]
#[command(version, group(ArgGroup::new("source").required(true).args(["game", "gen"])))]
struct Cli {
    /// Game file.
    #[arg(long, value_name = "PATH")]
    game: Option<PathBuf>,
    /// Random game, e.g. "n=4,m=6,d=3,deg=2,sym=0".
    #[arg(long, value_name = "PARAMS")]
    gen: Option<String>,
    #[arg(long, value_enum, default_value = "bulletin-gd")]
    algo: Algo,
    /// Target potential gap.
    #[arg(long, conflicts_with = "sigma")]
    eps: Option<f64>,
    /// Social-cost slack; sets ε from a, m and --social.
    #[arg(long)]
    sigma: Option<f64>,
    /// Social cost the σ target refers to.
    #[arg(long, value_enum, default_value = "avg", requires = "sigma")]
    social: Social,
    /// Common learning rate (default 1/λ).
    #[arg(long)]
    eta: Option<f64>,
    /// Upper bound on the bandit floor Λ.
    #[arg(long)]
    lambda_cap: Option<f64>,
    #[arg(long, default_value_t = mirror_congestion::bandit::DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = mirror_congestion::bandit::DEFAULT_NU)]
    nu: f64,
    /// Bulletin steps (default: the closed-form budget).
    #[arg(long, conflicts_with = "episodes")]
    steps: Option<usize>,
    /// Bandit episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Seed for the generator and the bandit streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory CSV.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Bandit choice-vector log.
    #[arg(long, value_name = "PATH")]
    replay: Option<PathBuf>,
    /// Keep every k-th bulletin step in the CSV.
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long, overrides_with = "no_assert")]
    assert: bool,
    /// Report assertions without affecting the exit status.
    #[arg(long)]
    no_assert: bool,
}

fn spec_from(cli: Cli) -> anyhow::Result<ExperimentSpec> {
    let source = match (cli.game, cli.gen) {
        (Some(path), _) => GameSource::File(path),
        (None, Some(text)) => GameSource::Generated {
            params: text.parse::<GenParams>()?,
            seed: cli.seed,
        },
        (None, None) => unreachable!("clap requires a game source"),
    };
    let algorithm = match cli.algo {
        Algo::BulletinGd => Algorithm::BulletinGd,
        Algo::BulletinMu => Algorithm::BulletinMu,
        Algo::BanditGd => Algorithm::BanditGd,
        Algo::BanditMu => Algorithm::BanditMu,
    };
    let mut spec = ExperimentSpec::new(source, algorithm);
    spec.target = match (cli.eps, cli.sigma) {
        (Some(eps), _) => Some(Target::Epsilon(eps)),
        (None, Some(sigma)) => Some(Target::Sigma {
            sigma,
            cost: match cli.social {
                Social::Avg => SocialCost::Average,
                Social::Max => SocialCost::Max,
            },
        }),
        (None, None) => None,
    };
    spec.eta = cli.eta;
    spec.lambda_cap = cli.lambda_cap;
    spec.kappa = cli.kappa;
    spec.nu = cli.nu;
    spec.steps = cli.steps;
    spec.episodes = cli.episodes;
    spec.seed = cli.seed;
    spec.out = cli.out;
    spec.replay = cli.replay;
    spec.record_every = cli.record_every;
    spec.assert = !cli.no_assert;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CONGESTION_LOG_LEVEL", "error"),
    )
    .init();
    let cli = Cli::parse();
    let result = spec_from(cli).and_then(|spec| run_experiment(&spec));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
