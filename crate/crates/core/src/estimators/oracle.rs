//! Random-restart brute-force search for the best joint measurement on small
//! registers. It shares no code with the see-saw beyond the eigensolver, and
//! it exists to check the see-saw's optima.
//!
//! Elements are parameterized as whitened rank-one operators
//! `M_j = S^{−1/2} b_j b_j† S^{−1/2}` with `S = Σ b_j b_j†`, and guesses by
//! polar angles. Each restart climbs with per-coordinate adaptive steps.

use crate::bloch::{fibonacci_grid, spin_state, Direction};
use crate::linalg::{eigh, kron_vec, ComplexMatrix, HermitianOperator};
use crate::protocol::{mix_seed, rng_from_seed, Pattern};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

/// Largest register the oracle accepts.
pub const ORACLE_MAX_QUBITS: usize = 2;
/// Fewest restarts the oracle will run.
pub const MIN_RESTARTS: usize = 32;

const COARSE_FLOOR: f64 = 1e-3;
const FINE_FLOOR: f64 = 1e-8;
const REFINED: usize = 4;
const MAX_PASSES: usize = 4000;

/// Best averaged fidelity found by coordinate ascent over whitened rank-one
/// POVMs with `n_outcomes` elements, on a `grid_size` Fibonacci prior.
pub fn brute_force_oracle(
    pattern: &Pattern,
    grid_size: usize,
    n_outcomes: usize,
    restarts: usize,
) -> Result<f64> {
    brute_force_oracle_seeded(pattern, grid_size, n_outcomes, restarts, 0)
}

pub fn brute_force_oracle_seeded(
    pattern: &Pattern,
    grid_size: usize,
    n_outcomes: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    if pattern.len() > ORACLE_MAX_QUBITS {
        return Err(Error::InvalidInput(format!(
            "oracle handles at most {ORACLE_MAX_QUBITS} qubits, got {}",
            pattern.len()
        )));
    }
    let dim = 1usize << pattern.len();
    if n_outcomes < dim {
        return Err(Error::InvalidInput(format!(
            "{n_outcomes} rank-one outcomes cannot complete dimension {dim}"
        )));
    }
    let problem = Problem::new(pattern, grid_size, n_outcomes);
    // Every restart climbs coarsely; the most promising few are refined.
    let mut candidates = (0..restarts.max(MIN_RESTARTS) as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(mix_seed(seed, r));
            let mut x: Vec<f64> = (0..problem.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let value = problem.climb(&mut x, COARSE_FLOOR)?;
            Ok((value, x))
        })
        .collect::<Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let best = candidates
        .into_par_iter()
        .take(REFINED)
        .map(|(_, mut x)| problem.climb(&mut x, FINE_FLOOR))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(best)
}

struct Problem {
    dim: usize,
    outcomes: usize,
    /// Σ w ψψ† followed by Σ w n_k ψψ†, each dense row-major.
    moments: [Vec<Complex64>; 4],
}

impl Problem {
    fn new(pattern: &Pattern, grid_size: usize, outcomes: usize) -> Self {
        let dim = 1usize << pattern.len();
        let grid = fibonacci_grid(grid_size);
        let mut moments: [Vec<Complex64>; 4] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); dim * dim]);
        for (n, w) in grid.iter() {
            let psi = pattern
                .spins()
                .iter()
                .fold(vec![Complex64::new(1.0, 0.0)], |acc, s| kron_vec(&acc, spin_state(n, *s).amplitudes()));
            let coeff = [w, w * n.x(), w * n.y(), w * n.z()];
            for i in 0..dim {
                for j in 0..dim {
                    let v = psi[i] * psi[j].conj();
                    for (m, c) in moments.iter_mut().zip(coeff) {
                        m[i * dim + j] += v * c;
                    }
                }
            }
        }
        Problem { dim, outcomes, moments }
    }

    fn n_params(&self) -> usize {
        self.outcomes * (2 * self.dim + 2)
    }

    fn quadratic(&self, k: usize, v: &[Complex64]) -> f64 {
        let m = &self.moments[k];
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            let row: Complex64 = (0..self.dim).map(|j| m[i * self.dim + j] * v[j]).sum();
            acc += v[i].conj() * row;
        }
        acc.re
    }

    /// Objective at a parameter vector: for each outcome, 2·dim reals for the
    /// factor then (θ, φ) for the guess.
    fn evaluate(&self, params: &[f64]) -> Result<f64> {
        let d = self.dim;
        let stride = 2 * d + 2;
        let factors: Vec<Vec<Complex64>> = (0..self.outcomes)
            .map(|j| {
                let p = &params[j * stride..j * stride + 2 * d];
                (0..d).map(|i| Complex64::new(p[2 * i], p[2 * i + 1])).collect()
            })
            .collect();
        let mut s = ComplexMatrix::zeros(d, d);
        for b in &factors {
            for i in 0..d {
                for k in 0..d {
                    s[(i, k)] += b[i] * b[k].conj();
                }
            }
        }
        let eig = eigh(&HermitianOperator::new(s)?)?;
        let max = eig.values[d - 1];
        if !(eig.values[0] > 1e-12 * max) {
            return Ok(f64::NEG_INFINITY);
        }
        let whiten = eig.reconstruct_with(|l| 1.0 / l.sqrt());
        let mut total = 0.0;
        for (j, b) in factors.iter().enumerate() {
            let c = whiten.matrix().mul_vec(b)?;
            let theta = params[j * stride + 2 * d];
            let phi = params[j * stride + 2 * d + 1];
            let m = Direction::from_spherical(theta, phi);
            let mut val = self.quadratic(0, &c);
            for k in 0..3 {
                val += m.component(k) * self.quadratic(k + 1, &c);
            }
            total += 0.5 * val;
        }
        Ok(total)
    }

    /// Coordinate ascent: each coordinate is probed at ±h and moved to the
    /// vertex of the fitted parabola when that improves, with per-coordinate
    /// step adaptation. Each pass ends with a Hooke-Jeeves pattern move along
    /// its net displacement. Stops once every step is below `floor`.
    fn climb(&self, x: &mut [f64], floor: f64) -> Result<f64> {
        let mut f = self.evaluate(x)?;
        let mut steps = vec![0.25_f64; x.len()];
        for _ in 0..MAX_PASSES {
            if steps.iter().all(|s| *s < floor) {
                break;
            }
            let start = x.to_vec();
            for i in 0..x.len() {
                let h = steps[i];
                if h < floor {
                    continue;
                }
                let orig = x[i];
                x[i] = orig + h;
                let plus = self.evaluate(x)?;
                x[i] = orig - h;
                let minus = self.evaluate(x)?;
                let (mut best_x, mut best_f) = (orig, f);
                if plus > best_f {
                    (best_x, best_f) = (orig + h, plus);
                }
                if minus > best_f {
                    (best_x, best_f) = (orig - h, minus);
                }
                let curvature = plus + minus - 2.0 * f;
                if curvature < 0.0 {
                    let offset = (h * (minus - plus) / (2.0 * curvature)).clamp(-4.0 * h, 4.0 * h);
                    x[i] = orig + offset;
                    let vertex = self.evaluate(x)?;
                    if vertex > best_f {
                        (best_x, best_f) = (orig + offset, vertex);
                    }
                }
                x[i] = best_x;
                let moved = (best_x - orig).abs();
                steps[i] = if best_f > f { moved.clamp(floor, 1.0) } else { h * 0.25 };
                f = best_f;
            }
            let delta: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
            let mut scale = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + scale * d).collect();
                let value = self.evaluate(&trial)?;
                if value > f {
                    f = value;
                    x.copy_from_slice(&trial);
                    scale *= 2.0;
                } else {
                    break;
                }
            }
        }
        Ok(f)
    }
}
