//! Bob's collective strategy: permute his qubits so the aligned ones come
//! first, apply the see-saw-optimized joint measurement for that pattern, and
//! report the outcome's guess.

use super::seesaw::{seesaw_optimize_on_grid, SeesawConfig, SeesawResult};
use crate::bloch::{fibonacci_grid, Direction, SphereGrid};
use crate::protocol::{bob_spin, OutcomeRecord, ParticleBox, Pattern, MAX_COLLECTIVE_QUBITS};
use crate::{Error, Result, Spin};
use rand::Rng;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Joint measurements are optimized once per (aligned, anti-aligned) count
/// and shared between threads.
#[derive(Debug)]
pub struct CollectiveEstimator {
    grid: SphereGrid,
    grid_size: usize,
    seed: u64,
    cache: Mutex<HashMap<(usize, usize), Arc<SeesawResult>>>,
}

impl CollectiveEstimator {
    /// Prior is a `grid_size` Fibonacci grid, cut to the open hemisphere of
    /// `hint` when given.
    pub fn new(grid_size: usize, hint: Option<&Direction>, seed: u64) -> Result<Self> {
        let grid = fibonacci_grid(grid_size);
        let grid = match hint {
            Some(h) => grid.restricted_to_hemisphere(h).ok_or_else(|| {
                Error::Configuration("hemisphere hint leaves no grid nodes".into())
            })?,
            None => grid,
        };
        Ok(CollectiveEstimator { grid, grid_size, seed, cache: Mutex::new(HashMap::new()) })
    }

    pub fn measurement_for(&self, ups: usize, downs: usize) -> Result<Arc<SeesawResult>> {
        if ups + downs > MAX_COLLECTIVE_QUBITS {
            return Err(Error::SizeLimit(format!(
                "collective strategy handles at most {MAX_COLLECTIVE_QUBITS} qubits, got {}",
                ups + downs
            )));
        }
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&(ups, downs)) {
            return Ok(Arc::clone(hit));
        }
        let pattern = Pattern::sorted(ups, downs);
        let mut config = SeesawConfig::for_pattern(&pattern);
        config.grid_size = self.grid_size;
        config.n_outcomes = config.n_outcomes.min(self.grid_size);
        config.seed = self.seed;
        let result = Arc::new(seesaw_optimize_on_grid(&pattern, &config, &self.grid)?);
        self.cache.lock().expect("cache lock").insert((ups, downs), Arc::clone(&result));
        Ok(result)
    }

    /// Optimizes every split of an `n`-qubit register ahead of time.
    pub fn prepare(&self, n: usize) -> Result<()> {
        (0..=n).try_for_each(|ups| self.measurement_for(ups, n - ups).map(|_| ()))
    }

    pub fn estimate<R: Rng + ?Sized>(
        &self,
        outcomes: &[OutcomeRecord],
        particles: &ParticleBox,
        rng: &mut R,
    ) -> Result<Direction> {
        let (aligned, anti): (Vec<&OutcomeRecord>, Vec<&OutcomeRecord>) =
            outcomes.iter().partition(|o| bob_spin(o.alice_outcome) == Spin::Up);
        let (ups, downs) = (aligned.len(), anti.len());
        let order: Vec<usize> = aligned.iter().chain(&anti).map(|o| o.index).collect();
        let result = self.measurement_for(ups, downs)?;
        let j = particles.measure_collective(&order, &result.measurement, rng)?;
        Ok(result.measurement.reduced().guesses()[j])
    }
}
