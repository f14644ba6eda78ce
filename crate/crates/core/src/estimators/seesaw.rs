//! See-saw search for the best joint measurement on a pattern family.
//!
//! Alternates the POVM fixed-point step (guesses fixed) with the exact guess
//! update (elements fixed). The iteration runs inside the support of the
//! prior state `Σ w ρ(n)`. The returned measurement is embedded back into the
//! full register, and the rest of the space is shared equally among the
//! outcomes. That part never carries any probability for the family.

use super::povm::{povm_update, JointMeasurement, Povm, ScoreModel, ROLLBACK_TOL};
use crate::bloch::{fibonacci_grid, Direction, Rotation, SphereGrid};
use crate::linalg::{ComplexMatrix, HermitianOperator, PureState};
use crate::numfmt;
use crate::protocol::{pattern_state, rng_from_seed, Pattern};
use crate::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeesawConfig {
    pub grid_size: usize,
    pub n_outcomes: usize,
    #[serde(serialize_with = "numfmt::f17")]
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl SeesawConfig {
    pub const DEFAULT_GRID: usize = 2000;
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_ITER: usize = 500;

    /// Outcome count used for an `n`-qubit register: 30 per qubit up to four
    /// qubits, 120 beyond.
    pub fn default_outcomes(n_qubits: usize) -> usize {
        30 * n_qubits.clamp(1, 4)
    }

    pub fn for_pattern(pattern: &Pattern) -> Self {
        SeesawConfig {
            grid_size: Self::DEFAULT_GRID,
            n_outcomes: Self::default_outcomes(pattern.len()),
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outcomes < 2 || self.grid_size < self.n_outcomes {
            return Err(Error::Configuration(format!(
                "need grid size ≥ outcomes ≥ 2, got grid {} and {} outcomes",
                self.grid_size, self.n_outcomes
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Configuration(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Invariant diagnostics recorded after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    #[serde(serialize_with = "numfmt::f17")]
    pub objective: f64,
    #[serde(serialize_with = "numfmt::f17")]
    pub completeness_residual: f64,
    #[serde(serialize_with = "numfmt::f17")]
    pub min_eigenvalue: f64,
    pub rolled_back: bool,
}

/// A POVM stored as `M_j = V m_j V† + (I − VV†)/J` for an isometry `V`.
#[derive(Debug, Clone)]
pub struct CompressedPovm {
    isometry: ComplexMatrix,
    reduced: Povm,
}

impl CompressedPovm {
    pub fn full_dim(&self) -> usize {
        self.isometry.rows()
    }

    pub fn reduced(&self) -> &Povm {
        &self.reduced
    }

    pub fn to_full(&self) -> Result<Povm> {
        let d = self.full_dim();
        let j = self.reduced.len();
        let support = HermitianOperator::identity(self.reduced.dim()).conjugate_by(&self.isometry)?;
        let complement = HermitianOperator::identity(d).add(&support.scale(-1.0)).scale(1.0 / j as f64);
        let elements = self
            .reduced
            .elements()
            .iter()
            .map(|m| Ok(m.conjugate_by(&self.isometry)?.add(&complement)))
            .collect::<Result<Vec<_>>>()?;
        Povm::from_parts(elements, self.reduced.guesses().to_vec())
    }
}

impl JointMeasurement for CompressedPovm {
    fn probabilities(&self, psi: &PureState) -> Result<Vec<f64>> {
        let coords = self.isometry.adjoint().mul_vec(psi.amplitudes())?;
        let inside: f64 = coords.iter().map(|z| z.norm_sqr()).sum();
        let outside = (1.0 - inside).max(0.0) / self.reduced.len() as f64;
        self.reduced
            .elements()
            .iter()
            .map(|m| Ok(m.expectation(&coords)?.max(0.0) + outside))
            .collect()
    }

    fn guesses(&self) -> &[Direction] {
        self.reduced.guesses()
    }
}

#[derive(Debug, Clone)]
pub struct SeesawResult {
    pub pattern: Pattern,
    pub config: SeesawConfig,
    pub measurement: CompressedPovm,
    /// Mean fidelity of `measurement`.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Entry 0 describes the initial POVM.
    pub history: Vec<IterationStats>,
}

impl SeesawResult {
    /// The optimized POVM on the full 2^N-dimensional register.
    pub fn povm(&self) -> Result<Povm> {
        self.measurement.to_full()
    }

    /// Objective values in iteration order.
    pub fn objective_sequence(&self) -> Vec<f64> {
        self.history.iter().map(|s| s.objective).collect()
    }
}

/// See-saw optimization over a Fibonacci prior of `config.grid_size` nodes.
pub fn seesaw_optimize(pattern: &Pattern, config: &SeesawConfig) -> Result<SeesawResult> {
    config.validate()?;
    let grid = fibonacci_grid(config.grid_size);
    seesaw_optimize_on_grid(pattern, config, &grid)
}

/// See-saw optimization over an arbitrary prior grid; `config.grid_size` is
/// only checked against the outcome count.
pub fn seesaw_optimize_on_grid(
    pattern: &Pattern,
    config: &SeesawConfig,
    grid: &SphereGrid,
) -> Result<SeesawResult> {
    config.validate()?;
    pattern.check_size()?;
    let (model, isometry) = ScoreModel::new(pattern, grid)?.compressed()?;
    let to_reduced = isometry.adjoint();

    // Initial outcomes: family states at Fibonacci directions, randomly turned
    // by the seed, whitened to completeness.
    let turn = Rotation::random(&mut rng_from_seed(config.seed));
    let starts: Vec<Direction> = fibonacci_grid(config.n_outcomes).nodes().iter().map(|m| turn.apply(m)).collect();
    let raw = starts
        .iter()
        .map(|m| {
            let psi = pattern_state(pattern, m)?;
            Ok(HermitianOperator::projector(&to_reduced.mul_vec(psi.amplitudes())?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut povm = Povm::complete(raw, starts)?;
    let mut objective = model.objective(&povm)?;
    let mut history = vec![stats(0, &povm, objective, false)?];

    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        iterations = it;
        let update = povm_update(&povm, &model.scores(povm.guesses()))?;
        let candidate = model.guess_update(&update.povm)?;
        let mut next = model.objective(&candidate)?;
        let mut rolled_back = update.rolled_back;
        let previous = objective;
        if next < objective - ROLLBACK_TOL {
            rolled_back = true;
            next = objective;
        } else {
            povm = candidate;
        }
        objective = next.max(objective);
        history.push(stats(it, &povm, objective, rolled_back)?);
        if (objective - previous).abs() <= config.tol * previous.abs() {
            converged = true;
            break;
        }
    }

    Ok(SeesawResult {
        pattern: pattern.clone(),
        config: *config,
        measurement: CompressedPovm { isometry, reduced: povm },
        objective,
        converged,
        iterations,
        history,
    })
}

fn stats(iteration: usize, povm: &Povm, objective: f64, rolled_back: bool) -> Result<IterationStats> {
    Ok(IterationStats {
        iteration,
        objective,
        completeness_residual: povm.completeness_residual(),
        min_eigenvalue: povm.min_eigenvalue()?,
        rolled_back,
    })
}
