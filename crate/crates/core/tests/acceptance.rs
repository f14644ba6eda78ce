//! End-to-end acceptance checks. Each test prints a single PASS or FAIL line
//! straight to stdout, so it shows up even when output is captured.

use num_complex::Complex64;
use qtri_core::bloch::{fibonacci_grid, random_direction, Rotation};
use qtri_core::channel::{self, run_in_process, run_session};
use qtri_core::estimators::oracle::brute_force_oracle;
use qtri_core::estimators::povm::mean_fidelity;
use qtri_core::estimators::seesaw::{seesaw_optimize, IterationStats, SeesawResult};
use qtri_core::estimators::{BobEstimator, Strategy};
use qtri_core::experiments::{fit_power_law, run_trials, summarize, BenchmarkConfig};
use qtri_core::linalg::{kron, HermitianOperator};
use qtri_core::numfmt::fmt17;
use qtri_core::protocol::{alice_outcomes, rng_from_seed, GroundTruth, Outcome, ParticleBox};
use qtri_core::{Direction, Pattern, Povm, ProtocolConfig, SeesawConfig};
use rand::Rng;
use statrs::distribution::{Binomial, DiscreteCDF};
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::time::{Duration, Instant};

fn verdict(criterion: u32, pass: bool, detail: String) {
    let line = format!("{} criterion {criterion:>2}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn pat(s: &str) -> Pattern {
    s.parse().unwrap()
}

fn optimize(p: &str, outcomes: usize) -> (SeesawResult, Duration) {
    let pattern = pat(p);
    let mut config = SeesawConfig::for_pattern(&pattern);
    config.grid_size = 2000;
    config.n_outcomes = outcomes;
    let start = Instant::now();
    let r = seesaw_optimize(&pattern, &config).unwrap();
    (r, start.elapsed())
}

/// Reasons a history breaks the POVM invariants, if any.
fn history_problems(r: &SeesawResult) -> Vec<String> {
    let mut bad = Vec::new();
    for s in &r.history {
        let IterationStats { iteration, completeness_residual, min_eigenvalue, .. } = *s;
        if completeness_residual > 1e-8 {
            bad.push(format!("{} it {iteration}: residual {completeness_residual:e}", r.pattern));
        }
        if min_eigenvalue < -1e-10 {
            bad.push(format!("{} it {iteration}: min eigenvalue {min_eigenvalue:e}", r.pattern));
        }
    }
    if r.history.windows(2).any(|w| w[1].objective < w[0].objective) {
        bad.push(format!("{}: objective decreased", r.pattern));
    }
    bad
}

#[test]
fn criterion_01_single_spin() {
    let (r, took) = optimize("u", 30);
    let oracle_start = Instant::now();
    let oracle = brute_force_oracle(&pat("u"), 2000, 4, 32).unwrap();
    let oracle_took = oracle_start.elapsed();
    let pass = (r.objective - 2.0 / 3.0).abs() <= 2e-3
        && (r.objective - oracle).abs() <= 5e-3
        && took <= Duration::from_secs(5)
        && history_problems(&r).is_empty();
    verdict(
        1,
        pass,
        format!(
            "F(u) = {:.6} (target 0.666667 ± 2e-3), oracle {:.6}, see-saw {:.2?}, oracle {:.2?}",
            r.objective, oracle, took, oracle_took
        ),
    );
}

#[test]
fn criterion_02_anti_parallel_advantage() {
    let start = Instant::now();
    let (uu, _) = optimize("uu", 60);
    let (ud, _) = optimize("ud", 60);
    let took = start.elapsed();
    let oracle_uu = brute_force_oracle(&pat("uu"), 2000, 4, 32).unwrap();
    let oracle_ud = brute_force_oracle(&pat("ud"), 2000, 4, 32).unwrap();
    let gap = ud.objective - uu.objective;
    let pass = gap >= 0.03
        && (uu.objective - 0.750).abs() <= 3e-3
        && (ud.objective - 0.789).abs() <= 3e-3
        && (uu.objective - oracle_uu).abs() <= 5e-3
        && (ud.objective - oracle_ud).abs() <= 5e-3
        && took <= Duration::from_secs(60)
        && history_problems(&uu).is_empty()
        && history_problems(&ud).is_empty();
    verdict(
        2,
        pass,
        format!(
            "F(uu) = {:.6}, F(ud) = {:.6}, gap {:.6} (≥ 0.03), oracle {:.6} / {:.6}, see-saw {:.2?}",
            uu.objective, ud.objective, gap, oracle_uu, oracle_ud, took
        ),
    );
}

#[test]
fn criterion_03_parallel_baseline() {
    let (uuu, t3) = optimize("uuu", 90);
    let (uuuu, t4) = optimize("uuuu", 120);
    let pass = (uuu.objective - 0.800).abs() <= 5e-3
        && t3 <= Duration::from_secs(180)
        && (uuuu.objective - 0.833).abs() <= 7e-3
        && t4 <= Duration::from_secs(600)
        && history_problems(&uuu).is_empty()
        && history_problems(&uuuu).is_empty();
    verdict(
        3,
        pass,
        format!(
            "F(uuu) = {:.6} in {t3:.2?} (0.800 ± 5e-3); stretch F(uuuu) = {:.6} in {t4:.2?} (0.833 ± 7e-3)",
            uuu.objective, uuuu.objective
        ),
    );
}

#[test]
fn criterion_04_generalization_probe() {
    let (uudd, _) = optimize("uudd", 120);
    let (uuuu, _) = optimize("uuuu", 120);
    let gap = uudd.objective - uuuu.objective;
    let pass = gap >= -1e-3 && history_problems(&uudd).is_empty() && history_problems(&uuuu).is_empty();
    verdict(
        4,
        pass,
        format!("F(uudd) = {:.6}, F(uuuu) = {:.6}, gap {gap:+.6} (reported, bound ≥ -1e-3)", uudd.objective, uuuu.objective),
    );
}

#[test]
fn criterion_05_anticorrelation() {
    let mut mismatches = 0;
    for round in 0..10_000u64 {
        let config = ProtocolConfig::new(1, round);
        let (truth, outcomes, particles) = ParticleBox::prepare(&config);
        let mut rng = rng_from_seed(round ^ 0x5eed);
        let bob = particles.measure(0, &truth.a_z, &mut rng);
        if bob != outcomes[0].alice_outcome.negate() {
            mismatches += 1;
        }
    }
    verdict(5, mismatches == 0, format!("{mismatches} of 10000 rounds not anticorrelated"));
}

#[test]
fn criterion_06_alice_blindness() {
    let n = 100_000;
    let coin = Binomial::new(0.5, n as u64).unwrap();
    let mut rng = rng_from_seed(6);
    let mut truths = vec![Direction::PLUS_Z, Direction::MINUS_Z, Direction::PLUS_X];
    truths.extend((0..3).map(|_| random_direction(&mut rng)));
    let mut worst = 1.0f64;
    for (i, a_z) in truths.iter().enumerate() {
        let config = ProtocolConfig::new(n, 600 + i as u64);
        let plus = alice_outcomes(&GroundTruth { a_z: *a_z }, &config)
            .iter()
            .filter(|o| o.alice_outcome == Outcome::Plus)
            .count() as u64;
        let lower = coin.cdf(plus);
        let upper = if plus == 0 { 1.0 } else { 1.0 - coin.cdf(plus - 1) };
        worst = worst.min((2.0 * lower.min(upper)).min(1.0));
    }
    verdict(6, worst >= 1e-6, format!("smallest two-sided binomial p-value {worst:.3e} over {} truths (≥ 1e-6)", truths.len()));
}

#[test]
fn criterion_07_local_scaling() {
    let start = Instant::now();
    let config = BenchmarkConfig::new(Strategy::Frame, vec![8, 16, 32, 64, 128, 256, 512], 2000, 7);
    let summaries = summarize(&run_trials(&config).unwrap()).unwrap();
    let exponent = fit_power_law(&summaries).unwrap();
    let took = start.elapsed();
    let pass = (-0.65..=-0.35).contains(&exponent) && took <= Duration::from_secs(120);
    verdict(7, pass, format!("frame exponent {exponent:.4} in [-0.65, -0.35], {took:.2?}"));
}

#[test]
fn criterion_08_povm_invariants() {
    let runs = [("u", 30), ("uu", 60), ("ud", 60), ("uuu", 90), ("uuuu", 120), ("uudd", 120)];
    let mut problems = Vec::new();
    let mut iterations = 0;
    for (p, j) in runs {
        let (r, _) = optimize(p, j);
        iterations += r.history.len();
        problems.extend(history_problems(&r));
        let full = r.povm().unwrap();
        if full.completeness_residual() > 1e-8 || full.min_eigenvalue().unwrap() < -1e-10 {
            problems.push(format!("{p}: embedded POVM invalid"));
        }
    }
    verdict(
        8,
        problems.is_empty(),
        format!("{iterations} recorded iterations over {} runs, problems: {problems:?}", runs.len()),
    );
}

fn random_povm(rng: &mut impl Rng, dim: usize, outcomes: usize) -> Povm {
    let raw = (0..outcomes)
        .map(|_| {
            let v: Vec<Complex64> = (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            HermitianOperator::projector(&v)
        })
        .collect();
    let guesses = (0..outcomes).map(|_| random_direction(rng)).collect();
    Povm::complete(raw, guesses).unwrap()
}

#[test]
fn criterion_09_rotational_covariance() {
    let grid = fibonacci_grid(2000);
    let mut rng = rng_from_seed(9);
    let mut worst = 0.0f64;
    for p in ["u", "ud"] {
        let pattern = pat(p);
        let (optimized, _) = optimize(p, 12);
        let povms = [optimized.povm().unwrap(), random_povm(&mut rng, pattern.dim(), 7)];
        for povm in &povms {
            let base = mean_fidelity(povm, &pattern, &grid).unwrap();
            for _ in 0..20 {
                let rot = Rotation::random(&mut rng);
                let u = (1..pattern.len()).fold(rot.su2(), |acc, _| kron(&acc, &rot.su2()).unwrap());
                let moved = povm.transformed(&u, |d| rot.apply(d)).unwrap();
                let f = mean_fidelity(&moved, &pattern, &grid.rotated(&rot)).unwrap();
                worst = worst.max((f - base).abs());
            }
        }
    }
    verdict(9, worst <= 1e-9, format!("largest change under 20 rotations per POVM {worst:.3e} (≤ 1e-9)"));
}

#[test]
fn criterion_10_transport_equivalence() {
    let estimator = BobEstimator::new(Strategy::Mle, 2000, None).unwrap();
    let config = ProtocolConfig::new(96, 2024);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let client = std::thread::spawn(move || TcpStream::connect(addr).unwrap());
    let (server, _) = listener.accept().unwrap();
    let tcp = run_session(&config, &estimator, client.join().unwrap(), server).unwrap();
    let pipe = run_in_process(&config, &estimator).unwrap();
    let single = channel::simulate_run(&config, &estimator).unwrap();

    let same_transcript = tcp.alice.to_json() == pipe.alice.to_json()
        && tcp.alice.to_json() == single.to_json()
        && tcp.bob.to_json() == tcp.alice.to_json();
    let same_bytes = tcp.alice_sent == pipe.alice_sent && tcp.bob_sent == pipe.bob_sent;
    let truth = single.truth.unwrap().a_z;
    let wire: String = tcp.alice_sent.iter().chain(&tcp.bob_sent).map(|&b| b as char).collect();
    let leaked: Vec<String> = truth
        .to_array()
        .iter()
        .flat_map(|c| [c.to_string(), fmt17(*c)])
        .filter(|s| wire.contains(s.as_str()))
        .collect();
    verdict(
        10,
        same_transcript && same_bytes && leaked.is_empty(),
        format!(
            "transcripts identical: {same_transcript}, frame bytes identical: {same_bytes} ({} + {} bytes), truth leaked: {leaked:?}",
            tcp.alice_sent.len(),
            tcp.bob_sent.len()
        ),
    );
}

#[test]
fn criterion_11_quadrature_sanity() {
    let grid = fibonacci_grid(2000);
    let mut rng = rng_from_seed(11);
    let mut worst = 0.0f64;
    let mut guesses = vec![Direction::PLUS_Z, Direction::MINUS_Z, Direction::PLUS_X];
    guesses.extend((0..5).map(|_| random_direction(&mut rng)));
    for p in ["u", "d", "ud"] {
        let pattern = pat(p);
        for g in &guesses {
            let f = mean_fidelity(&Povm::trivial(pattern.dim(), *g), &pattern, &grid).unwrap();
            worst = worst.max((f - 0.5).abs());
        }
    }
    verdict(11, worst <= 0.01, format!("identity POVM scores within {worst:.3e} of 0.5 (≤ 0.01)"));
}
