//! `qtri`: run the singlet direction-finding protocol, optimize collective
//! measurements, benchmark strategies, and run Alice and Bob over TCP.

use clap::{Args, Parser, Subcommand};
use qtri_core::bloch::direction_to_latlon;
use qtri_core::channel::{self, alice_endpoint, bob_endpoint, simulate_run};
use qtri_core::estimators::{seesaw_optimize, BobEstimator};
use qtri_core::experiments::{self, BenchmarkConfig, ExportFormat};
use qtri_core::numfmt::F17;
use qtri_core::protocol::GroundTruth;
use qtri_core::{Direction, Error, Pattern, ProtocolConfig, SeesawConfig, Strategy};
use serde::Serialize;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qtri", version, about = "Locate Alice's axis from singlet-correlated qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One protocol run in a single process; prints the transcript and Bob's lat/lon.
    Simulate(SimulateArgs),
    /// See-saw optimization of collective measurements for spin patterns.
    Optimize(OptimizeArgs),
    /// Monte Carlo benchmark of a strategy over register sizes.
    Bench(BenchArgs),
    /// Alice's endpoint: announce outcomes and collect Bob's estimate.
    Alice(AliceArgs),
    /// Bob's endpoint: receive outcomes, estimate, reply.
    Bob(BobArgs),
    /// Convert a vector to latitude and longitude.
    Latlon(LatlonArgs),
}

#[derive(Args)]
struct Session {
    /// Number of singlet pairs.
    #[arg(long, default_value_t = 96)]
    n: usize,
    /// Session seed.
    #[arg(long, env = "QTRI_SEED", default_value_t = 0)]
    seed: u64,
    /// Known hemisphere for Alice's axis, as x,y,z.
    #[arg(long, value_parser = parse_direction)]
    hint: Option<Direction>,
}

#[derive(Args)]
struct EstimatorArgs {
    /// frame, mle or collective.
    #[arg(long, default_value = "mle", value_parser = parse_strategy)]
    strategy: Strategy,
    /// MLE search grid and collective prior size.
    #[arg(long, default_value_t = 2000)]
    grid: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    session: Session,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Comma-separated u/d patterns, e.g. "uu,ud".
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_pattern)]
    pattern: Vec<Pattern>,
    /// Prior grid size.
    #[arg(long, default_value_t = SeesawConfig::DEFAULT_GRID)]
    grid: usize,
    /// Outcome count; defaults to 30 per qubit, 120 from four qubits on.
    #[arg(long)]
    outcomes: Option<usize>,
    /// Relative convergence tolerance.
    #[arg(long, default_value_t = SeesawConfig::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = SeesawConfig::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Turns the initial outcome directions.
    #[arg(long, env = "QTRI_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Comma-separated register sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, env = "QTRI_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    grid: usize,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Known hemisphere for Alice's axis, as x,y,z.
    #[arg(long, value_parser = parse_direction)]
    hint: Option<Direction>,
    /// Output file; CSV also writes <stem>.summary.csv beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ExportFormat,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Endpoint {
    /// Wait for the peer on this address.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.0.0.0:7070")]
    listen: Option<String>,
    /// Connect to the peer at this address.
    #[arg(long, num_args = 0..=1, default_missing_value = "127.0.0.1:7070")]
    connect: Option<String>,
}

#[derive(Args)]
struct AliceArgs {
    #[command(flatten)]
    session: Session,
    #[command(flatten)]
    endpoint: Endpoint,
}

#[derive(Args)]
struct BobArgs {
    /// Must match Alice's seed.
    #[arg(long, env = "QTRI_SEED", default_value_t = 0)]
    seed: u64,
    /// Must match Alice's hint.
    #[arg(long, value_parser = parse_direction)]
    hint: Option<Direction>,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    endpoint: Endpoint,
    /// Sessions to serve when listening, each on its own thread.
    #[arg(long, default_value_t = 1)]
    sessions: usize,
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct LatlonArgs {
    #[arg(long)]
    x: f64,
    #[arg(long)]
    y: f64,
    #[arg(long)]
    z: f64,
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let v: [f64; 3] = parts.try_into().map_err(|_| "expected x,y,z".to_string())?;
    Direction::from_vector(v).ok_or_else(|| "direction must be finite and nonzero".to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Appends the default port when `addr` has none.
fn with_port(addr: &str) -> String {
    if addr.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) && !addr.ends_with(']') {
        addr.to_string()
    } else {
        format!("{addr}:{}", channel::DEFAULT_PORT)
    }
}

enum Failure {
    Argument(String),
    Protocol(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::SizeLimit(_) | Error::InvalidInput(_) | Error::Configuration(_) | Error::Io { .. } => {
                Failure::Argument(msg)
            }
            Error::Channel(_) => Failure::Protocol(msg),
            Error::Linalg(_) | Error::Numerical(_) | Error::Fit(_) => Failure::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Protocol(format!("transport: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Optimize(a) => optimize(a),
        Command::Bench(a) => bench(a),
        Command::Alice(a) => alice(a),
        Command::Bob(a) => bob(a),
        Command::Latlon(a) => latlon(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Argument(m)) => {
            eprintln!("qtri: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Protocol(m)) => {
            eprintln!("qtri: protocol error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("qtri: numerical failure: {m}");
            ExitCode::from(4)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output serializes")
}

fn print_latlon(d: &Direction) {
    let (lat, lon) = direction_to_latlon(d);
    // `+ 0.0` turns a negative zero into zero.
    println!("lat {:?} lon {:?}", lat + 0.0, lon + 0.0);
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let config = ProtocolConfig::new(a.session.n, a.session.seed).with_hint(a.session.hint);
    let estimator = BobEstimator::new(a.estimator.strategy, a.estimator.grid, a.session.hint)?;
    estimator.check_size(config.n_particles)?;
    let transcript = simulate_run(&config, &estimator)?;
    println!("{}", transcript.to_json());
    if let Some(e) = &transcript.estimate {
        print_latlon(&e.direction);
    }
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport {
    pattern: String,
    #[serde(rename = "F")]
    objective: F17,
    converged: bool,
    iterations: usize,
    grid: usize,
    n_outcomes: usize,
    seed: u64,
    completeness_residual: F17,
    min_eigenvalue: F17,
    guesses: Vec<Direction>,
}

#[derive(Serialize)]
struct Comparison {
    pattern: String,
    baseline: String,
    #[serde(rename = "delta_F")]
    delta: F17,
}

#[derive(Serialize)]
struct OptimizeOutput {
    results: Vec<OptimizeReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    comparison: Vec<Comparison>,
}

fn optimize(a: OptimizeArgs) -> Result<(), Failure> {
    let mut results = Vec::new();
    let mut all_converged = true;
    for pattern in &a.pattern {
        let mut config = SeesawConfig::for_pattern(pattern);
        config.grid_size = a.grid;
        config.n_outcomes = a.outcomes.unwrap_or(config.n_outcomes);
        config.tol = a.tol;
        config.max_iter = a.max_iter;
        config.seed = a.seed;
        let r = seesaw_optimize(pattern, &config)?;
        let last = r.history.last().expect("history has the initial entry");
        all_converged &= r.converged;
        results.push(OptimizeReport {
            pattern: pattern.to_string(),
            objective: F17(r.objective),
            converged: r.converged,
            iterations: r.iterations,
            grid: config.grid_size,
            n_outcomes: config.n_outcomes,
            seed: config.seed,
            completeness_residual: F17(last.completeness_residual),
            min_eigenvalue: F17(last.min_eigenvalue),
            guesses: r.measurement.reduced().guesses().to_vec(),
        });
    }
    let comparison = results
        .iter()
        .skip(1)
        .map(|r| Comparison {
            pattern: r.pattern.clone(),
            baseline: results[0].pattern.clone(),
            delta: F17(r.objective.0 - results[0].objective.0),
        })
        .collect();
    println!("{}", to_json(&OptimizeOutput { results, comparison }));
    if all_converged {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("see-saw did not converge within {} iterations", a.max_iter)))
    }
}

#[derive(Serialize)]
struct BenchOutput {
    summaries: Vec<experiments::Summary>,
    exponent: Option<F17>,
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let mut config = BenchmarkConfig::new(a.strategy, a.n, a.trials, a.seed);
    config.grid_size = a.grid;
    config.hemisphere_hint = a.hint;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = a.threads {
        if t == 0 {
            return Err(Failure::Argument("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Failure::Argument(format!("thread pool: {e}")))?;
    let results = pool.install(|| experiments::run_trials(&config))?;
    let summaries = experiments::summarize(&results)?;
    let exponent = experiments::fit_power_law(&summaries).ok().map(F17);
    if let Some(out) = &a.out {
        experiments::export(&results, &summaries, a.format, out)?;
    }
    println!("{}", to_json(&BenchOutput { summaries, exponent }));
    Ok(())
}

fn connect(endpoint: &Endpoint) -> Result<TcpStream, Failure> {
    match (&endpoint.listen, &endpoint.connect) {
        (Some(addr), _) => {
            let listener = TcpListener::bind(with_port(addr))?;
            eprintln!("qtri: listening on {}", listener.local_addr()?);
            Ok(listener.accept()?.0)
        }
        (None, Some(addr)) => Ok(TcpStream::connect(with_port(addr))?),
        (None, None) => Err(Failure::Argument("need --listen or --connect".into())),
    }
}

fn alice(a: AliceArgs) -> Result<(), Failure> {
    let config = ProtocolConfig::new(a.session.n, a.session.seed).with_hint(a.session.hint);
    let truth = GroundTruth::sample(&config);
    let mut stream = connect(&a.endpoint)?;
    let transcript = alice_endpoint(&truth, &config, &mut stream)?;
    println!("{}", transcript.to_json());
    Ok(())
}

fn bob(a: BobArgs) -> Result<(), Failure> {
    let estimator = BobEstimator::new(a.estimator.strategy, a.estimator.grid, a.hint)?;
    let serve = |mut stream: TcpStream| -> Result<(), Failure> {
        let transcript = bob_endpoint(&estimator, a.seed, a.hint, &mut stream)?;
        println!("{}", transcript.to_json());
        Ok(())
    };
    match (&a.endpoint.listen, a.sessions) {
        (Some(addr), sessions) if sessions > 1 => {
            let listener = TcpListener::bind(with_port(addr))?;
            eprintln!("qtri: listening on {}", listener.local_addr()?);
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..sessions)
                    .map(|_| listener.accept().map(|(stream, _)| s.spawn(|| serve(stream))))
                    .collect::<Result<_, _>>()?;
                handles.into_iter().try_for_each(|h| h.join().expect("session thread panicked"))
            })
        }
        _ => serve(connect(&a.endpoint)?),
    }
}

fn latlon(a: LatlonArgs) -> Result<(), Failure> {
    let d = Direction::from_vector([a.x, a.y, a.z])
        .ok_or_else(|| Failure::Argument("vector must be finite and nonzero".into()))?;
    print_latlon(&d);
    Ok(())
}
