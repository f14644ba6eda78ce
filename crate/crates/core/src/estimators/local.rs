//! Particle-by-particle strategies: Bob measures each qubit on its own along
//! a fixed axis and combines the results.

use crate::bloch::{Direction, SphereGrid};
use crate::protocol::{Outcome, OutcomeRecord, ParticleBox};
use crate::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMeasurementRecord {
    pub index: usize,
    pub axis: Direction,
    pub bob_outcome: Outcome,
    pub alice_outcome: Outcome,
}

impl LocalMeasurementRecord {
    /// Corrected outcome −alice·bob, whose expectation is `a_z · axis`.
    pub fn corrected(&self) -> f64 {
        -(self.alice_outcome.as_f64() * self.bob_outcome.as_f64())
    }
}

/// Bob measures one of his particles along `axis`. His Bloch vector is
/// `b = −alice_outcome · a_z`, so the result is +1 with probability
/// (1 + b·axis)/2.
pub fn simulate_local_measurement<R: Rng + ?Sized>(
    alice_outcome: Outcome,
    a_z: &Direction,
    axis: &Direction,
    rng: &mut R,
) -> Outcome {
    let b_dot = -alice_outcome.as_f64() * a_z.dot(axis);
    let p_plus = ((1.0 + b_dot) / 2.0).clamp(0.0, 1.0);
    if rng.gen::<f64>() < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// Axis for the `i`-th particle under round-robin x, y, z assignment.
pub fn round_robin_axis(i: usize) -> Direction {
    match i % 3 {
        0 => Direction::PLUS_X,
        1 => Direction::PLUS_Y,
        _ => Direction::PLUS_Z,
    }
}

/// Measures every particle in announcement order along the round-robin axes.
pub fn measure_round_robin<R: Rng + ?Sized>(
    particles: &ParticleBox,
    outcomes: &[OutcomeRecord],
    rng: &mut R,
) -> Vec<LocalMeasurementRecord> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let axis = round_robin_axis(i);
            LocalMeasurementRecord {
                index: o.index,
                axis,
                bob_outcome: particles.measure(o.index, &axis, rng),
                alice_outcome: o.alice_outcome,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEstimate {
    pub direction: Direction,
    /// Component means vanished; `direction` is the +z fallback.
    pub degenerate: bool,
}

/// Normalized vector of per-axis mean corrected outcomes.
pub fn estimate_frame_vector(records: &[LocalMeasurementRecord]) -> Result<FrameEstimate> {
    if records.is_empty() {
        return Err(Error::InvalidInput("frame estimate needs at least one record".into()));
    }
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for r in records {
        let k = [Direction::PLUS_X, Direction::PLUS_Y, Direction::PLUS_Z]
            .iter()
            .position(|a| *a == r.axis)
            .ok_or_else(|| {
                Error::InvalidInput(format!("frame estimate needs coordinate axes, got {}", r.axis))
            })?;
        sums[k] += r.corrected();
        counts[k] += 1;
    }
    let m: [f64; 3] =
        std::array::from_fn(|k| if counts[k] == 0 { 0.0 } else { sums[k] / counts[k] as f64 });
    let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
    if norm < 1e-12 {
        return Ok(FrameEstimate { direction: Direction::PLUS_Z, degenerate: true });
    }
    Ok(FrameEstimate {
        direction: Direction::from_vector(m).expect("nonzero"),
        degenerate: false,
    })
}

/// Grid node maximizing the log-likelihood of the records, restricted to the
/// open hemisphere around `hemisphere_hint` when one is given. Ties go to the
/// lowest node index.
pub fn estimate_mle(
    records: &[LocalMeasurementRecord],
    grid: &SphereGrid,
    hemisphere_hint: Option<&Direction>,
) -> Result<Direction> {
    if records.is_empty() {
        return Err(Error::InvalidInput("MLE needs at least one record".into()));
    }
    let mut best: Option<(f64, Direction)> = None;
    for node in grid.nodes() {
        if let Some(h) = hemisphere_hint {
            if node.dot(h) <= 0.0 {
                continue;
            }
        }
        let ll: f64 = records
            .iter()
            .map(|r| ((1.0 + r.corrected() * node.dot(&r.axis)) / 2.0).max(1e-300).ln())
            .sum();
        if best.is_none_or(|(b, _)| ll > b) {
            best = Some((ll, *node));
        }
    }
    best.map(|(_, n)| n).ok_or_else(|| {
        Error::Configuration("hemisphere hint leaves no grid nodes for the MLE".into())
    })
}
