//! Monte Carlo benchmark harness.
//!
//! Each trial draws Alice's axis, runs the protocol and scores Bob's estimate.
//! Trial `t` uses the seed `mix_seed(master_seed, t)` for every `n`, so the
//! results do not depend on scheduling.

use crate::bloch::{angle_between, direction_fidelity, Direction};
use crate::estimators::{BobEstimator, Estimator, Strategy};
use crate::numfmt::{self, fmt17};
use crate::protocol::{mix_seed, stream, ParticleBox, ProtocolConfig};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub strategy: Strategy,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    /// MLE search grid and collective prior size.
    pub grid_size: usize,
    pub hemisphere_hint: Option<Direction>,
}

impl BenchmarkConfig {
    pub fn new(strategy: Strategy, n_values: Vec<usize>, trials: usize, master_seed: u64) -> Self {
        BenchmarkConfig {
            strategy,
            n_values,
            trials,
            master_seed,
            grid_size: 2000,
            hemisphere_hint: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Configuration("need at least one trial".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::Configuration("need at least one register size".into()));
        }
        if self.grid_size == 0 {
            return Err(Error::Configuration("grid size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n: usize,
    pub strategy: String,
    pub trial: usize,
    pub seed: u64,
    #[serde(serialize_with = "numfmt::f17")]
    pub fidelity: f64,
    #[serde(serialize_with = "numfmt::f17")]
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub strategy: String,
    pub trials: usize,
    #[serde(serialize_with = "numfmt::f17")]
    pub mean_fidelity: f64,
    /// Standard error of the mean fidelity.
    #[serde(serialize_with = "numfmt::f17")]
    pub std_err: f64,
    #[serde(serialize_with = "numfmt::f17")]
    pub mean_angle_deg: f64,
}

/// Runs every (n, trial) pair with the built-in strategy named in `config`.
pub fn run_trials(config: &BenchmarkConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let estimator = BobEstimator::new(config.strategy, config.grid_size, config.hemisphere_hint)?;
    for &n in &config.n_values {
        estimator.check_size(n)?;
    }
    for &n in &config.n_values {
        estimator.prepare(n)?;
    }
    run_trials_with(config, &estimator)
}

/// Same as [`run_trials`] with a caller-supplied estimator; `config.strategy`
/// is ignored in favour of the estimator's label.
pub fn run_trials_with(config: &BenchmarkConfig, estimator: &dyn Estimator) -> Result<Vec<TrialResult>> {
    config.validate()?;
    for &n in &config.n_values {
        estimator.supports(n)?;
    }
    let label = estimator.label();
    let jobs: Vec<(usize, usize)> =
        config.n_values.iter().flat_map(|&n| (0..config.trials).map(move |t| (n, t))).collect();
    let mut results = jobs
        .into_par_iter()
        .map(|(n, trial)| run_one(config, estimator, &label, n, trial))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| (a.n, &a.strategy, a.trial).cmp(&(b.n, &b.strategy, b.trial)));
    Ok(results)
}

fn run_one(
    config: &BenchmarkConfig,
    estimator: &dyn Estimator,
    label: &str,
    n: usize,
    trial: usize,
) -> Result<TrialResult> {
    let seed = mix_seed(config.master_seed, trial as u64);
    let protocol = ProtocolConfig::new(n, seed).with_hint(config.hemisphere_hint);
    let (truth, outcomes, particles) = ParticleBox::prepare(&protocol);
    let mut rng = protocol.stream_rng(stream::BOB);
    let guess = estimator.estimate(&outcomes, &particles, &mut rng)?;
    Ok(TrialResult {
        n,
        strategy: label.to_string(),
        trial,
        seed,
        fidelity: direction_fidelity(&truth.a_z, &guess),
        angle_deg: angle_between(&truth.a_z, &guess).to_degrees(),
    })
}

/// Per-(n, strategy) means, ordered by n then strategy.
pub fn summarize(results: &[TrialResult]) -> Result<Vec<Summary>> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to summarize".into()));
    }
    let mut groups: BTreeMap<(usize, &str), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.n, r.strategy.as_str())).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((n, strategy), mut group)| {
            // Fixed summation order keeps the output independent of input order.
            group.sort_by_key(|r| (r.trial, r.seed));
            let k = group.len() as f64;
            let mean_fidelity = group.iter().map(|r| r.fidelity).sum::<f64>() / k;
            let mean_angle_deg = group.iter().map(|r| r.angle_deg).sum::<f64>() / k;
            let std_err = if group.len() > 1 {
                let var = group.iter().map(|r| (r.fidelity - mean_fidelity).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            };
            Summary { n, strategy: strategy.to_string(), trials: group.len(), mean_fidelity, std_err, mean_angle_deg }
        })
        .collect())
}

/// Least-squares slope of log(mean angle) against log(n).
pub fn fit_power_law(summaries: &[Summary]) -> Result<f64> {
    if let Some(first) = summaries.first() {
        if summaries.iter().any(|s| s.strategy != first.strategy) {
            return Err(Error::Fit("summaries mix several strategies".into()));
        }
    }
    if let Some(bad) = summaries.iter().find(|s| !(s.mean_angle_deg > 0.0) || s.n == 0) {
        return Err(Error::Fit(format!("cannot take logs at n = {} with mean angle {}", bad.n, bad.mean_angle_deg)));
    }
    let mut distinct: Vec<usize> = summaries.iter().map(|s| s.n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!("need 3 distinct n values, got {}", distinct.len())));
    }
    let pts: Vec<(f64, f64)> = summaries.iter().map(|s| ((s.n as f64).ln(), s.mean_angle_deg.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        })
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown export format {other:?}"))),
        }
    }
}

pub const RESULTS_HEADER: [&str; 6] = ["n", "strategy", "trial", "seed", "fidelity", "angle_deg"];
pub const SUMMARY_HEADER: [&str; 6] = ["n", "strategy", "trials", "mean_fidelity", "std_err", "mean_angle_deg"];

/// Where the CSV summary table goes for a given results path:
/// `bench.csv` becomes `bench.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.summary.{ext}"))
}

/// CSV writes the results table to `path` and the summaries to
/// [`summary_path`]. JSON writes `{"results": [...], "summaries": [...]}`
/// to `path`. Files are replaced atomically.
pub fn export(results: &[TrialResult], summaries: &[Summary], format: ExportFormat, path: &Path) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            write_atomic(path, &results_csv(results)?)?;
            write_atomic(&summary_path(path), &summaries_csv(summaries)?)
        }
        ExportFormat::Json => {
            let doc = serde_json::json!({ "results": results, "summaries": summaries });
            let mut bytes = serde_json::to_vec_pretty(&doc)
                .map_err(|e| Error::InvalidInput(format!("serializing results: {e}")))?;
            bytes.push(b'\n');
            write_atomic(path, &bytes)
        }
    }
}

pub fn results_csv(results: &[TrialResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = vec![RESULTS_HEADER.map(String::from)];
    rows.extend(results.iter().map(|r| {
        [r.n.to_string(), r.strategy.clone(), r.trial.to_string(), r.seed.to_string(), fmt17(r.fidelity), fmt17(r.angle_deg)]
    }));
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

pub fn summaries_csv(summaries: &[Summary]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = vec![SUMMARY_HEADER.map(String::from)];
    rows.extend(summaries.iter().map(|s| {
        [
            s.n.to_string(),
            s.strategy.clone(),
            s.trials.to_string(),
            fmt17(s.mean_fidelity),
            fmt17(s.std_err),
            fmt17(s.mean_angle_deg),
        ]
    }));
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<TrialResult>> {
    read_csv(path, &RESULTS_HEADER)
}

pub fn read_summaries_csv(path: &Path) -> Result<Vec<Summary>> {
    read_csv(path, &SUMMARY_HEADER)
}

pub fn read_json(path: &Path) -> Result<(Vec<TrialResult>, Vec<Summary>)> {
    #[derive(Deserialize)]
    struct Doc {
        results: Vec<TrialResult>,
        summaries: Vec<Summary>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let doc: Doc = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok((doc.results, doc.summaries))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let found = r.headers().map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::InvalidInput(format!("{}: unexpected header {found:?}", path.display())));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display()))))
        .collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}
