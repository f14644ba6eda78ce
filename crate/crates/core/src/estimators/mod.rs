//! Bob's strategies for recovering Alice's axis.

pub mod collective;
pub mod local;
pub mod oracle;
pub mod povm;
pub mod seesaw;

pub use collective::CollectiveEstimator;
pub use local::{estimate_frame_vector, estimate_mle, simulate_local_measurement, LocalMeasurementRecord};
pub use oracle::brute_force_oracle;
pub use povm::{guess_update, mean_fidelity, povm_update, score_operators, Povm, ScoreModel};
pub use seesaw::{seesaw_optimize, SeesawConfig, SeesawResult};

use crate::bloch::{fibonacci_grid, Direction, SphereGrid};
use crate::protocol::{OutcomeRecord, ParticleBox, MAX_COLLECTIVE_QUBITS};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Round-robin x, y, z measurements, normalized component means.
    Frame,
    /// Round-robin measurements, grid maximum likelihood.
    Mle,
    /// See-saw-optimized joint measurement.
    Collective,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Frame => "frame",
            Strategy::Mle => "mle",
            Strategy::Collective => "collective",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(Strategy::Frame),
            "mle" => Ok(Strategy::Mle),
            "collective" => Ok(Strategy::Collective),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Anything that turns Alice's announcements plus Bob's particles into a
/// direction. The benchmark harness runs these.
pub trait Estimator: Send + Sync {
    fn label(&self) -> String;

    /// Rejects register sizes the estimator cannot handle.
    fn supports(&self, _n: usize) -> Result<()> {
        Ok(())
    }

    fn estimate(
        &self,
        outcomes: &[OutcomeRecord],
        particles: &ParticleBox,
        rng: &mut ChaCha8Rng,
    ) -> Result<Direction>;
}

/// One of the built-in strategies with its settings.
#[derive(Debug)]
pub struct BobEstimator {
    strategy: Strategy,
    grid: SphereGrid,
    hint: Option<Direction>,
    collective: Option<CollectiveEstimator>,
}

impl BobEstimator {
    /// `grid_size` sets the MLE search grid and the collective prior.
    pub fn new(strategy: Strategy, grid_size: usize, hint: Option<Direction>) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::Configuration("grid size must be positive".into()));
        }
        let collective = match strategy {
            Strategy::Collective => Some(CollectiveEstimator::new(grid_size, hint.as_ref(), 1)?),
            _ => None,
        };
        let grid = match strategy {
            Strategy::Mle => fibonacci_grid(grid_size),
            _ => fibonacci_grid(1),
        };
        Ok(BobEstimator { strategy, grid, hint, collective })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Rejects register sizes the strategy cannot handle.
    pub fn check_size(&self, n: usize) -> Result<()> {
        if self.strategy == Strategy::Collective && n > MAX_COLLECTIVE_QUBITS {
            return Err(Error::SizeLimit(format!(
                "collective strategy supports at most {MAX_COLLECTIVE_QUBITS} qubits, got {n}"
            )));
        }
        Ok(())
    }

    /// Runs the collective optimizations for an `n`-qubit register up front.
    pub fn prepare(&self, n: usize) -> Result<()> {
        self.check_size(n)?;
        match &self.collective {
            Some(c) => c.prepare(n),
            None => Ok(()),
        }
    }
}

impl Estimator for BobEstimator {
    fn label(&self) -> String {
        self.strategy.label().to_string()
    }

    fn supports(&self, n: usize) -> Result<()> {
        self.check_size(n)
    }

    fn estimate(
        &self,
        outcomes: &[OutcomeRecord],
        particles: &ParticleBox,
        rng: &mut ChaCha8Rng,
    ) -> Result<Direction> {
        self.check_size(outcomes.len())?;
        if outcomes.is_empty() {
            // Nothing to measure; fall back on the prior.
            return Ok(self.hint.unwrap_or(Direction::PLUS_Z));
        }
        match self.strategy {
            Strategy::Frame => {
                let records = local::measure_round_robin(particles, outcomes, rng);
                Ok(estimate_frame_vector(&records)?.direction)
            }
            Strategy::Mle => {
                let records = local::measure_round_robin(particles, outcomes, rng);
                estimate_mle(&records, &self.grid, self.hint.as_ref())
            }
            Strategy::Collective => self
                .collective
                .as_ref()
                .expect("collective estimator configured")
                .estimate(outcomes, particles, rng),
        }
    }
}
