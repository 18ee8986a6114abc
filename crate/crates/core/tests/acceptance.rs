//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! gating failure.

use std::process::ExitCode;
use std::time::Instant;

use mirror_congestion::bandit::{
    self, enumerate_path_costs, estimate_gradient, observe_episode, restrict_profile, BanditConfig,
    EpisodeChoices, GradientSource, PlayerStreams,
};
use mirror_congestion::bulletin::{
    run_bulletin_with, social_ratio_report, BulletinConfig, Reference, RunReport,
};
use mirror_congestion::generate::{generate_random_game, GenParams};
use mirror_congestion::minimize::minimize_max_cost;
use mirror_congestion::{
    CongestionGame, FeasibleSet, FlowProfile, GeometryKind, MirrorMap, PolynomialCost,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    name: &'static str,
    passed: bool,
    /// Whether the exit status depends on this line.
    gating: bool,
    detail: String,
}

fn line(name: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict {
        name,
        passed,
        gating: true,
        detail,
    }
}

fn suite_game(g: u64) -> CongestionGame {
    let params = GenParams {
        players: [2, 4, 8][g as usize % 3],
        edges: 3 + g as usize % 6,
        paths: 2 + g as usize % 3,
        degree: 3,
        ..GenParams::default()
    };
    generate_random_game(g, &params).unwrap()
}

fn symmetric_game(g: u64) -> CongestionGame {
    let params = GenParams {
        players: [2, 3, 4, 6, 8][g as usize % 5],
        edges: 3 + g as usize % 5,
        paths: 2 + g as usize % 3,
        degree: 3,
        symmetric: true,
        ..GenParams::default()
    };
    generate_random_game(100 + g, &params).unwrap()
}

fn random_profile<R: Rng>(rng: &mut R, game: &CongestionGame, sparse: bool) -> FlowProfile {
    let blocks = (0..game.players())
        .map(|i| {
            let mut w: Vec<f64> = (0..game.path_count(i))
                .map(|_| {
                    if sparse && rng.gen_bool(0.3) {
                        0.0
                    } else {
                        -rng.gen::<f64>().max(1e-300).ln()
                    }
                })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                w[0] = 1.0;
            }
            w
        })
        .collect();
    FlowProfile::from_probabilities(game, normalize(blocks)).unwrap()
}

fn normalize(blocks: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    blocks
        .into_iter()
        .map(|b| {
            let total: f64 = b.iter().sum();
            b.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

const EPS: f64 = 1e-3;

struct BulletinRuns {
    gd: Vec<RunReport>,
    mu: Vec<RunReport>,
    heterogeneous: Vec<RunReport>,
}

fn bulletin_runs(out: &mut Vec<Verdict>) -> BulletinRuns {
    let mut runs = BulletinRuns {
        gd: Vec::new(),
        mu: Vec::new(),
        heterogeneous: Vec::new(),
    };
    for geo in [GeometryKind::Euclidean, GeometryKind::Entropy] {
        let start = Instant::now();
        let mut hits = 0;
        let mut worst: f64 = 0.0;
        for g in 0..20 {
            let game = suite_game(g);
            let n = game.players() as f64;
            let eta = 1.0 / game.smoothness_params().lambda;
            let budget = match geo {
                GeometryKind::Euclidean => 2.0 / (n * eta * EPS),
                GeometryKind::Entropy => n * (game.max_paths() as f64 * n).ln() / (eta * EPS),
            }
            .ceil() as usize;
            let mut config = BulletinConfig::new(geo, EPS, budget);
            config.record_every = budget.div_ceil(200);
            let report = run_bulletin_with(&game, &config, &Reference::compute(&game)).unwrap();
            let gap = report.final_certified_gap();
            worst = worst.max(gap);
            if gap <= EPS && report.final_step == budget {
                hits += 1;
            }
            match geo {
                GeometryKind::Euclidean => runs.gd.push(report),
                GeometryKind::Entropy => runs.mu.push(report),
            }
        }
        let (name, formula, limit) = match geo {
            GeometryKind::Euclidean => ("bulletin gd convergence", "ceil(2/(n eta eps))", 60.0),
            GeometryKind::Entropy => ("bulletin mu convergence", "ceil(n ln(dn)/(eta eps))", 120.0),
        };
        let secs = start.elapsed().as_secs_f64();
        out.push(line(
            name,
            hits == 20 && secs < limit,
            format!(
                "{hits}/20 games with certified gap <= {EPS:e} at T = {formula}; worst {worst:.2e}; {secs:.1}s (limit {limit}s)"
            ),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for geo in [GeometryKind::Euclidean, GeometryKind::Entropy] {
        for g in 0..20 {
            let game = suite_game(g);
            let limit = 1.0 / game.smoothness_params().lambda;
            let floor = limit / 4.0;
            let mut rates: Vec<f64> = (0..game.players())
                .map(|_| rng.gen_range(floor..=limit))
                .collect();
            rates[0] = floor;
            let mut config = BulletinConfig::new(geo, EPS, 5000);
            config.rates = Some(rates);
            config.record_every = 50;
            runs.heterogeneous
                .push(run_bulletin_with(&game, &config, &Reference::compute(&game)).unwrap());
        }
    }
    runs
}

fn all_runs(runs: &BulletinRuns) -> impl Iterator<Item = &RunReport> {
    runs.gd.iter().chain(&runs.mu).chain(&runs.heterogeneous)
}

fn monotone(runs: &BulletinRuns, out: &mut Vec<Verdict>) {
    let total: usize = all_runs(runs).map(|r| r.monotone_violations).sum();
    let worst = all_runs(runs)
        .map(|r| r.worst_ascent)
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(line(
        "monotone descent",
        total == 0,
        format!(
            "{total} violations of Phi(x+) <= Phi(x) + 1e-10 over {} runs (40 with eta_i in [eta, 1/lambda]); largest change {worst:.2e}",
            all_runs(runs).count()
        ),
    ));
}

fn delta_equilibrium(runs: &BulletinRuns, out: &mut Vec<Verdict>) {
    let count = |list: &[RunReport]| list.iter().map(|r| r.delta_violations).sum::<usize>();
    let qualified: usize = all_runs(runs).map(|r| r.qualified_delta_violations).sum();
    let (gd, mu, het) = (count(&runs.gd), count(&runs.mu), count(&runs.heterogeneous));
    out.push(Verdict {
        name: "delta-equilibrium bound",
        passed: gd + mu + het == 0,
        gating: false,
        detail: format!(
            "steps with delta-gap > sqrt(8bm gap) + 1e-6: gd {gd}, mu {mu}, heterogeneous {het} \
             (paths kept at vanishing positive weight by mu; see README)"
        ),
    });
    out.push(line(
        "delta-equilibrium bound, mass-qualified paths",
        qualified == 0,
        format!("{qualified} violations over paths with x_is >= (c_s - c_min)/(4bm)"),
    ));
}

fn social_ratios(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let sigma = 0.25;
    let mut avg_ok = 0;
    let mut worst_avg: f64 = 0.0;
    for g in 0..20 {
        let game = suite_game(g);
        let eps = game.a() * sigma / (2.0 * game.edge_count() as f64);
        let n = game.players() as f64;
        let eta = 1.0 / game.smoothness_params().lambda;
        let mut config = BulletinConfig::new(
            GeometryKind::Euclidean,
            eps,
            (2.0 / (n * eta * eps)).ceil() as usize,
        );
        config.stop_at_target = true;
        config.record_every = usize::MAX;
        let reference = Reference::compute(&game);
        let report = run_bulletin_with(&game, &config, &reference).unwrap();
        let ratios = social_ratio_report(&game, &report.final_profile, &reference, None).unwrap();
        let bound = game.b() / game.a() * (1.0 + sigma);
        worst_avg = worst_avg.max(ratios.ratio_avg / bound);
        if report.final_certified_gap() <= eps && ratios.ratio_avg <= bound {
            avg_ok += 1;
        }
    }
    let mut max_ok = 0;
    let mut remark_ok = 0;
    let mut worst_max: f64 = 0.0;
    for g in 0..10 {
        let game = symmetric_game(g);
        let eps = game.a() * sigma * sigma / (32.0 * game.edge_count() as f64);
        let n = game.players() as f64;
        let eta = 1.0 / game.smoothness_params().lambda;
        let mut config = BulletinConfig::new(
            GeometryKind::Euclidean,
            eps,
            (2.0 / (n * eta * eps)).ceil() as usize,
        );
        config.stop_at_target = true;
        config.record_every = usize::MAX;
        let reference = Reference::compute(&game);
        let report = run_bulletin_with(&game, &config, &reference).unwrap();
        let bracket = minimize_max_cost(&game, 1e-9);
        let ratios =
            social_ratio_report(&game, &report.final_profile, &reference, Some(&bracket)).unwrap();
        let ratio = ratios.ratio_max.unwrap();
        worst_max = worst_max.max(ratio / ratios.bound_max.unwrap());
        if report.final_certified_gap() <= eps && ratios.max_holds() == Some(true) {
            max_ok += 1;
        }
        if ratio <= game.b() / game.a() * (1.0 + sigma) {
            remark_ok += 1;
        }
    }
    out.push(line(
        "social-cost ratios",
        avg_ok == 20 && max_ok == 10,
        format!(
            "C_A ratio <= (b/a)(1+s) at eps = a s/(2m): {avg_ok}/20 (worst ratio/bound {worst_avg:.3}); \
             C_M ratio <= (b/a)(1 + 2m eps/a + delta m/b) at eps = a s^2/(32m): {max_ok}/10 symmetric \
             (worst {worst_max:.3}; also <= (b/a)(1+s): {remark_ok}/10); s = {sigma}; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    ));
}

fn expectation_bias(out: &mut Vec<Verdict>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut linear_worst: f64 = 0.0;
    for g in 0..200u64 {
        let degree = if g % 4 == 0 { 1 } else { 2 };
        let params = GenParams {
            players: 1 + g as usize % 4,
            edges: 2 + g as usize % 5,
            paths: 1 + g as usize % 3,
            degree,
            ..GenParams::default()
        };
        let game = generate_random_game(1000 + g, &params).unwrap();
        let outcomes: usize = (0..game.players()).map(|i| game.path_count(i)).product();
        assert!(outcomes <= 10_000);
        let n = game.players() as f64;
        let bound = game.curvature() * game.max_path_len() as f64 / (8.0 * n);
        for trial in 0..20 {
            let x = random_profile(&mut rng, &game, trial % 2 == 1);
            let expected = enumerate_path_costs(&game, &x).unwrap();
            let loads = game.edge_loads(&x).unwrap();
            for i in 0..game.players() {
                for s in 0..game.path_count(i) {
                    let bias = expected[i][s] - game.path_cost_at(&loads, i, s);
                    checked += 1;
                    if game.is_linear() {
                        linear_worst = linear_worst.max(bias.abs());
                        if bias.abs() > 1e-12 {
                            violations += 1;
                        }
                    } else {
                        if bound > 0.0 {
                            worst = worst.max(bias / bound);
                        }
                        if bias < -1e-12 || bias > bound + 1e-12 {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    out.push(line(
        "expectation bias",
        violations == 0,
        format!(
            "{violations} violations of 0 <= E[c_s(X)] - c_s(x) <= B m_path/(8n) over {checked} (game, profile, path) triples; \
             worst bias/bound {worst:.3}; linear |bias| <= {linear_worst:.1e}"
        ),
    ));
}

fn links(n: usize) -> CongestionGame {
    CongestionGame::parallel_links(n, n, PolynomialCost::identity()).unwrap()
}

fn estimator(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let game = links(10);
    let config = BanditConfig::preset(&game, GeometryKind::Euclidean, 1, 0);
    let params = config.derive(&game).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = restrict_profile(
        &game,
        &random_profile(&mut rng, &game, true),
        config.floor_mix,
    )
    .unwrap();
    let exact = game.potential_gradient(&x).unwrap();
    let steps = config.episode_length(&game, 1);
    let mut within = 0;
    let mut within_edges = 0;
    let mut worst: f64 = 0.0;
    let eps_edges = 4.0 * game.b() * game.edge_count() as f64 / game.players() as f64;
    for seed in 0..200 {
        let mut streams = PlayerStreams::new(seed, game.players());
        let (visits, sums) = observe_episode(&game, &x, steps, &mut streams).unwrap();
        let (estimate, fallbacks) = estimate_gradient(&visits, &sums, None);
        let error = estimate
            .iter()
            .flatten()
            .zip(exact.iter().flatten())
            .map(|(g, c)| (g - c).abs())
            .fold(0.0, f64::max);
        worst = worst.max(error);
        if fallbacks == 0 && error <= params.epsilon {
            within += 1;
        }
        if fallbacks == 0 && error <= eps_edges {
            within_edges += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    out.push(line(
        "bandit estimator accuracy",
        within >= 176 && secs < 300.0,
        format!(
            "{within}/200 episodes with |g_hat - grad Phi|_inf <= 4b m_path/n = {:.3} (need 176); \
             {within_edges}/200 at 4b|E|/n = {eps_edges}; worst {worst:.2e}; {steps} steps/episode, Lambda = {:.3e}; {secs:.1}s",
            params.epsilon, config.floor_mix
        ),
    ));
}

fn convergence(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let game = links(10);
    let mut ok_runs = 0;
    let mut permanent = 0;
    let mut worst_gap: f64 = 0.0;
    let mut last_gaps = Vec::new();
    let mut params = None;
    for seed in 0..20 {
        let config = BanditConfig::preset(&game, GeometryKind::Euclidean, 6, seed);
        let report = bandit::run_bandit(&game, &config).unwrap();
        let ok = report.gap_after_tau0_holds() == Some(true);
        if ok {
            ok_runs += 1;
            if report.permanence_holds() != Some(false) {
                permanent += 1;
            }
        }
        let start_ep = report.params.tau0.ceil() as usize;
        worst_gap = report
            .episodes
            .iter()
            .filter(|r| r.episode >= start_ep)
            .map(|r| r.phi_gap)
            .fold(worst_gap, f64::max);
        last_gaps.push(report.final_phi - report.phi_q);
        params = Some(report.params);
    }
    let p = params.unwrap();
    let secs = start.elapsed().as_secs_f64();
    let median = {
        last_gaps.sort_by(f64::total_cmp);
        last_gaps[last_gaps.len() / 2]
    };
    let vacuous = if p.threshold >= p.alpha {
        " (threshold exceeds alpha, vacuous at this size)"
    } else {
        ""
    };
    out.push(line(
        "bandit convergence",
        ok_runs >= 18 && permanent == ok_runs && secs < 600.0,
        format!(
            "{ok_runs}/20 runs with gap <= 3 delta/theta = {:.3} from episode ceil(tau0) = {}, permanence in {permanent}/{ok_runs}{vacuous}; \
             worst gap after tau0 {worst_gap:.2e}, median final gap {median:.2e}; {secs:.1}s",
            p.threshold,
            p.tau0.ceil()
        ),
    ));
}

fn conditional_descent(out: &mut Vec<Verdict>) {
    let start = Instant::now();
    let mut runs = 0;
    let mut replay_mismatch = 0;
    let mut clean_runs = 0;
    let (mut eligible, mut passed, mut large, mut dropped) = (0, 0, 0, 0);
    for seed in 0..10u64 {
        let params = GenParams {
            players: [4, 6][seed as usize % 2],
            edges: 4,
            paths: 2,
            degree: 2,
            max_len: Some(2),
            ..GenParams::default()
        };
        let game = generate_random_game(500 + seed, &params).unwrap();
        let mut config = BanditConfig::preset(&game, GeometryKind::Euclidean, 6, seed);
        config.record_choices = true;
        config.mixed = None;
        let report = bandit::run_bandit(&game, &config).unwrap();
        runs += 1;
        let mut text = Vec::new();
        bandit::write_replay(&mut text, game.players(), &report.replay).unwrap();
        let log: Vec<EpisodeChoices> =
            bandit::read_replay(text.as_slice(), game.players()).unwrap();
        let mut previous: Option<Vec<Vec<f64>>> = None;
        for (record, choices) in report.episodes.iter().zip(&log) {
            let (visits, sums) = bandit::replay_episode(&game, choices).unwrap();
            let (estimate, _) = estimate_gradient(&visits, &sums, previous.as_deref());
            if visits != record.visits || sums != record.cost_sums || estimate != record.estimate {
                replay_mismatch += 1;
            }
            previous = Some(estimate);
        }
        if report
            .episodes
            .iter()
            .any(|r| r.estimate_error > report.params.epsilon || r.fallback_entries > 0)
        {
            continue;
        }
        clean_runs += 1;
        let s = report.descent_summary();
        eligible += s.eligible;
        passed += s.passed;
        large += s.large_gap;
        dropped += s.large_gap_decreased;
    }

    // exact gradients: the estimation terms vanish, leaving theta beta d Lambda
    let mut exact_checked = 0;
    let mut exact_passed = 0;
    for seed in 0..10u64 {
        let params = GenParams {
            players: 4,
            edges: 4,
            paths: 3,
            degree: 3,
            ..GenParams::default()
        };
        let game = generate_random_game(700 + seed, &params).unwrap();
        let mut config = BanditConfig::preset(&game, GeometryKind::Euclidean, 30, seed);
        config.gradient = GradientSource::Exact;
        config.mixed = None;
        let report = bandit::run_bandit(&game, &config).unwrap();
        let p = &report.params;
        let slack =
            p.theta * game.smoothness_params().beta * game.max_paths() as f64 * config.floor_mix;
        for (index, record) in report.episodes.iter().enumerate() {
            exact_checked += 1;
            if bandit::descent_step_check(
                record.phi,
                report.next_phi(index),
                report.phi_q,
                p.theta,
                slack,
            ) {
                exact_passed += 1;
            }
        }
    }
    let vacuous = if large == 0 {
        " (no episode reached 2 delta/theta)"
    } else {
        ""
    };
    out.push(line(
        "conditional descent",
        replay_mismatch == 0 && dropped == large && passed == eligible && eligible > 0,
        format!(
            "{clean_runs}/{runs} replay-verified runs with every error <= eps ({replay_mismatch} replay mismatches); \
             {dropped}/{large} large-gap episodes drop by >= delta - 1e-9{vacuous}; \
             Phi+ <= Phi - theta (Phi - Phi(q)) + delta in {passed}/{eligible} eligible episodes; \
             exact-gradient runs with slack theta beta d Lambda: {exact_passed}/{exact_checked}; {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    ));
}

fn threshold_scaling(out: &mut Vec<Verdict>) {
    let thresholds: Vec<f64> = [5, 10, 20]
        .iter()
        .map(|&n| {
            let game = links(n);
            BanditConfig::preset(&game, GeometryKind::Euclidean, 1, 0)
                .derive(&game)
                .unwrap()
                .threshold
        })
        .collect();
    out.push(line(
        "bandit threshold scaling",
        thresholds.windows(2).all(|w| w[1] < w[0]),
        format!("3 delta/theta on n parallel links, n = 5, 10, 20: {thresholds:.3?}"),
    ));
}

fn block<R: Rng>(rng: &mut R, set: &FeasibleSet, positive: bool) -> Vec<f64> {
    let w: Vec<f64> = (0..set.size())
        .map(|_| {
            let v = -rng.gen::<f64>().max(1e-300).ln();
            if positive || rng.gen_bool(0.7) {
                v
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let free = set.free_mass();
    let mut z: Vec<f64> = w.iter().map(|v| set.floor() + free * v / total).collect();
    if w.iter().all(|&v| v == 0.0) {
        z[0] += free;
    }
    z
}

fn geometry_properties(out: &mut Vec<Verdict>) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut details = Vec::new();
    let mut all_ok = true;
    for geo in [GeometryKind::Euclidean, GeometryKind::Entropy] {
        let (mut neg, mut strong, mut floored) = (0, 0, 0);
        for _ in 0..100_000 {
            let size = rng.gen_range(2..=6);
            let n = rng.gen_range(1..=10);
            let mass = 1.0 / n as f64;
            let lambda = rng.gen_range(0.0..1.0) / size as f64;
            let plain = FeasibleSet::simplex(size, mass).unwrap();
            let floor_set = FeasibleSet::new(size, mass, lambda * mass).unwrap();
            let positive = geo == GeometryKind::Entropy;
            let (u, v) = (
                block(&mut rng, &plain, false),
                block(&mut rng, &plain, positive),
            );
            let d = geo.divergence(&u, &v).unwrap();
            let sq: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < -1e-9 {
                neg += 1;
            }
            if sq > 2.0 * d + 1e-9 {
                strong += 1;
            }
            let (u, v) = (
                block(&mut rng, &floor_set, true),
                block(&mut rng, &floor_set, true),
            );
            let d = geo.divergence(&u, &v).unwrap();
            let sq: f64 = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            let scale = match geo {
                GeometryKind::Euclidean => 1.0,
                GeometryKind::Entropy => lambda * mass,
            };
            if scale * d > sq + 1e-9 {
                floored += 1;
            }
        }
        all_ok &= neg + strong + floored == 0;
        details.push(format!(
            "{geo}: {neg} negative, {strong} |u-v|^2 > 2D, {floored} floored-set"
        ));
    }
    out.push(line(
        "geometry properties",
        all_ok,
        format!("10^5 pairs per geometry: {}", details.join("; ")),
    ));
}

fn smoothness(out: &mut Vec<Verdict>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut convex_bad, mut curve_bad, mut value_bad, mut grad_bad) = (0, 0, 0, 0);
    let mut worst_curve: f64 = 0.0;
    let (mut aligned_bad, mut aligned_total, mut shared_bad) = (0, 0, 0);
    let mut worst_aligned: f64 = 0.0;
    let games = 20;
    for g in 0..games {
        let game = suite_game(g);
        let s = game.smoothness_params();
        for _ in 0..10_000 {
            let (x, y) = (
                random_profile(&mut rng, &game, true),
                random_profile(&mut rng, &game, true),
            );
            let t: f64 = rng.gen();
            let phi = |p: &FlowProfile| game.potential(p).unwrap();
            let mid = phi(&x.interpolate(&y, t));
            if mid > (1.0 - t) * phi(&x) + t * phi(&y) + 1e-12 {
                convex_bad += 1;
            }
            if phi(&x) > s.alpha + 1e-12 || phi(&x) < -1e-15 {
                value_bad += 1;
            }
            let grad = game.potential_gradient(&x).unwrap();
            if grad.iter().flatten().any(|&c| c > s.beta + 1e-12) {
                grad_bad += 1;
            }
        }
        for _ in 0..10_000 {
            let x = random_profile(&mut rng, &game, false);
            let z: Vec<Vec<f64>> = (0..game.players())
                .map(|i| {
                    let raw: Vec<f64> = (0..game.path_count(i))
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect();
                    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                    raw.iter().map(|v| v - mean).collect()
                })
                .collect();
            let norm: f64 = z.iter().flatten().map(|v| v * v).sum();
            if norm < 1e-12 {
                continue;
            }
            let loads = game.edge_loads(&x).unwrap();
            let mut dir = vec![0.0; game.edge_count()];
            for (i, zi) in z.iter().enumerate() {
                for (s, &w) in zi.iter().enumerate() {
                    for &e in &game.paths(i)[s] {
                        dir[e] += w;
                    }
                }
            }
            let h = 1e-3;
            let at = |t: f64| {
                let shifted: Vec<f64> = loads.iter().zip(&dir).map(|(l, d)| l + t * d).collect();
                game.potential_at(&shifted)
            };
            let curvature = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h);
            if curvature > game.shared_curvature_bound() * norm * (1.0 + 1e-6) + 1e-9 {
                shared_bad += 1;
            }
            worst_curve = worst_curve.max(curvature / (s.lambda * norm));
            if curvature > s.lambda * norm * (1.0 + 1e-6) + 1e-9 {
                curve_bad += 1;
            }
        }
    }
    // one direction shared by every player of a symmetric game
    for g in 0..10 {
        let game = symmetric_game(g);
        let s = game.smoothness_params();
        for _ in 0..1000 {
            let x = random_profile(&mut rng, &game, false);
            let raw: Vec<f64> = (0..game.path_count(0))
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let z: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            let norm = game.players() as f64 * z.iter().map(|v| v * v).sum::<f64>();
            if norm < 1e-12 {
                continue;
            }
            let loads = game.edge_loads(&x).unwrap();
            let mut dir = vec![0.0; game.edge_count()];
            for (s, &w) in z.iter().enumerate() {
                for &e in &game.paths(0)[s] {
                    dir[e] += game.players() as f64 * w;
                }
            }
            let curvature: f64 = game
                .edges()
                .iter()
                .zip(&loads)
                .zip(&dir)
                .map(|((c, &l), &d)| c.slope(l) * d * d)
                .sum();
            aligned_total += 1;
            worst_aligned = worst_aligned.max(curvature / (s.lambda * norm));
            if curvature > s.lambda * norm * (1.0 + 1e-9) {
                aligned_bad += 1;
            }
            if curvature > game.shared_curvature_bound() * norm * (1.0 + 1e-9) {
                shared_bad += 1;
            }
        }
    }
    out.push(Verdict {
        name: "curvature along player-aligned directions",
        passed: aligned_bad == 0,
        gating: false,
        detail: format!(
            "{aligned_bad}/{aligned_total} probes on 10 symmetric games exceed lambda = bmk times |z|^2 \
             (worst ratio {worst_aligned:.3}); {shared_bad} probes in total exceed b times the largest shared edge usage along a path"
        ),
    });
    out.push(line(
        "smoothness and convexity",
        convex_bad + curve_bad + value_bad + grad_bad + shared_bad == 0,
        format!(
            "{games} games x 10^4 probes each: {convex_bad} convexity, {curve_bad} curvature > lambda |z|^2 \
             (worst ratio {worst_curve:.3}), {value_bad} Phi outside [0, alpha], {grad_bad} gradients above beta"
        ),
    ));
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    let report = |verdicts: &Vec<Verdict>, from: usize| {
        for v in &verdicts[from..] {
            let label = match (v.passed, v.gating) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "FAIL (non-gating)",
            };
            println!("[{label}] {}: {}", v.name, v.detail);
        }
    };

    let mut shown = 0;
    let runs = bulletin_runs(&mut verdicts);
    monotone(&runs, &mut verdicts);
    delta_equilibrium(&runs, &mut verdicts);
    drop(runs);
    report(&verdicts, shown);
    shown = verdicts.len();
    let steps: [fn(&mut Vec<Verdict>); 8] = [
        social_ratios,
        expectation_bias,
        estimator,
        convergence,
        conditional_descent,
        threshold_scaling,
        geometry_properties,
        smoothness,
    ];
    for step in steps {
        step(&mut verdicts);
        report(&verdicts, shown);
        shown = verdicts.len();
    }

    let failed = verdicts.iter().filter(|v| v.gating && !v.passed).count();
    println!(
        "acceptance: {} lines, {failed} gating failures, {:.1}s",
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
