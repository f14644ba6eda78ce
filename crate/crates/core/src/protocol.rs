//! The triangulation protocol.
//!
//! Alice measures her half of each singlet along her vertical axis and reads
//! the results down the phone. Each of Bob's particles is then the singlet
//! partner: spin-down along the axis when Alice saw up, and spin-up when she saw down.
//!
//! Singlets are simulated analytically (fair coin for Alice, collapse rule for
//! Bob). All randomness flows from the config seed through [`mix_seed`], so a
//! run is reproducible from `(seed, n_particles)` alone.

use crate::bloch::{random_direction, random_direction_in_hemisphere, spin_state, Direction, Spin};
use crate::estimators::local::simulate_local_measurement;
use crate::estimators::povm::JointMeasurement;
use crate::linalg::{LinalgError, PureState, MAX_DIM};
use crate::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Maximum number of qubits handled by collective (tensor-product) routines.
pub const MAX_COLLECTIVE_QUBITS: usize = 8;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a master seed and a stream index:
/// `splitmix64(master ^ splitmix64(index))`.
pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

/// Seeded generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sub-seed streams carved out of a protocol seed.
pub mod stream {
    pub const TRUTH: u64 = 0;
    pub const ALICE: u64 = 1;
    pub const BOB: u64 = 2;
}

/// Alice's (or Bob's) ±1 measurement result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    pub fn negate(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Outcome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Outcome::from_value(v).ok_or_else(|| de::Error::custom(format!("outcome must be ±1, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub hemisphere_hint: Option<Direction>,
}

impl ProtocolConfig {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        ProtocolConfig { n_particles, seed, hemisphere_hint: None }
    }

    pub fn with_hint(mut self, hint: Option<Direction>) -> Self {
        self.hemisphere_hint = hint;
        self
    }

    pub fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        rng_from_seed(mix_seed(self.seed, stream))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub a_z: Direction,
}

impl GroundTruth {
    /// Alice's axis as drawn from the config's truth stream: uniform, or
    /// uniform on the hinted hemisphere.
    pub fn sample(config: &ProtocolConfig) -> Self {
        let mut rng = config.stream_rng(stream::TRUTH);
        let a_z = match &config.hemisphere_hint {
            Some(h) => random_direction_in_hemisphere(&mut rng, h),
            None => random_direction(&mut rng),
        };
        GroundTruth { a_z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub index: usize,
    pub alice_outcome: Outcome,
}

/// Alice measures every particle along her vertical. Her marginal is maximally
/// mixed, so each result is a fair coin regardless of the axis.
pub fn alice_measure<R: Rng + ?Sized>(
    _truth: &GroundTruth,
    config: &ProtocolConfig,
    rng: &mut R,
) -> Vec<OutcomeRecord> {
    (0..config.n_particles)
        .map(|index| OutcomeRecord {
            index,
            alice_outcome: if rng.gen_bool(0.5) { Outcome::Plus } else { Outcome::Minus },
        })
        .collect()
}

/// Alice's outcomes drawn from the config's own stream.
pub fn alice_outcomes(truth: &GroundTruth, config: &ProtocolConfig) -> Vec<OutcomeRecord> {
    alice_measure(truth, config, &mut config.stream_rng(stream::ALICE))
}

/// Bob's particle after Alice announced `outcome` along `a_z`.
pub fn bob_collapsed_state(outcome: Outcome, a_z: &Direction) -> PureState {
    spin_state(a_z, bob_spin(outcome))
}

/// Spin of Bob's partner particle relative to Alice's axis.
pub fn bob_spin(alice_outcome: Outcome) -> Spin {
    match alice_outcome {
        Outcome::Plus => Spin::Down,
        Outcome::Minus => Spin::Up,
    }
}

/// Aligned/anti-aligned pattern of a qubit register, written as a string of
/// `u` and `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern(Vec<Spin>);

impl Pattern {
    pub fn new(spins: Vec<Spin>) -> Self {
        Pattern(spins)
    }

    /// `ups` aligned qubits followed by `downs` anti-aligned ones.
    pub fn sorted(ups: usize, downs: usize) -> Self {
        Pattern(std::iter::repeat_n(Spin::Up, ups).chain(std::iter::repeat_n(Spin::Down, downs)).collect())
    }

    /// The pattern Bob holds after the given announcements.
    pub fn from_outcomes(outcomes: &[OutcomeRecord]) -> Self {
        Pattern(outcomes.iter().map(|o| bob_spin(o.alice_outcome)).collect())
    }

    pub fn spins(&self) -> &[Spin] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ups(&self) -> usize {
        self.0.iter().filter(|s| **s == Spin::Up).count()
    }

    pub fn dim(&self) -> usize {
        1 << self.0.len()
    }

    /// Same multiset of spins with the aligned ones first.
    pub fn canonical(&self) -> Self {
        Pattern::sorted(self.ups(), self.len() - self.ups())
    }

    pub fn flipped(&self) -> Self {
        Pattern(self.0.iter().map(|s| s.flip()).collect())
    }

    pub fn check_size(&self) -> Result<(), Error> {
        if self.0.len() > MAX_COLLECTIVE_QUBITS {
            return Err(Error::SizeLimit(format!(
                "pattern of {} qubits exceeds the collective limit of {MAX_COLLECTIVE_QUBITS}",
                self.0.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|s| write!(f, "{}", s.symbol()))
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                'u' | 'U' => Ok(Spin::Up),
                'd' | 'D' => Ok(Spin::Down),
                other => Err(Error::InvalidInput(format!("pattern character {other:?} is not u or d"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err(Error::InvalidInput("empty pattern".into()))
                } else {
                    Ok(Pattern(v))
                }
            })
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// ⊗ᵢ spin_state(n, patternᵢ), with qubit 0 most significant.
pub fn pattern_state(pattern: &Pattern, n: &Direction) -> Result<PureState, Error> {
    pattern.check_size()?;
    let up = spin_state(n, Spin::Up);
    let down = spin_state(n, Spin::Down);
    let mut amps = vec![num_complex::Complex64::new(1.0, 0.0)];
    for s in pattern.spins() {
        let factor = if *s == Spin::Up { &up } else { &down };
        amps = crate::linalg::kron_vec(&amps, factor.amplitudes());
    }
    debug_assert!(amps.len() <= MAX_DIM);
    PureState::new(amps).map_err(Error::from)
}

/// Bob's half of the singlets after Alice's announcements.
///
/// Holds the collapsed states privately; estimators only interact with it by
/// measuring. [`ParticleBox::referee_truth`] exists for harness checks.
#[derive(Debug, Clone)]
pub struct ParticleBox {
    a_z: Direction,
    spins: Vec<Spin>,
}

impl ParticleBox {
    pub fn new(truth: &GroundTruth, outcomes: &[OutcomeRecord]) -> Self {
        ParticleBox { a_z: truth.a_z, spins: outcomes.iter().map(|o| bob_spin(o.alice_outcome)).collect() }
    }

    /// The box as both parties reconstruct it from a shared config.
    pub fn prepare(config: &ProtocolConfig) -> (GroundTruth, Vec<OutcomeRecord>, ParticleBox) {
        let truth = GroundTruth::sample(config);
        let outcomes = alice_outcomes(&truth, config);
        let particles = ParticleBox::new(&truth, &outcomes);
        (truth, outcomes, particles)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    /// Single-qubit projective measurement of particle `index` along `axis`.
    pub fn measure<R: Rng + ?Sized>(&self, index: usize, axis: &Direction, rng: &mut R) -> Outcome {
        let alice = match self.spins[index] {
            Spin::Down => Outcome::Plus,
            Spin::Up => Outcome::Minus,
        };
        simulate_local_measurement(alice, &self.a_z, axis, rng)
    }

    /// Joint measurement of the particles taken in `order`; returns the
    /// outcome index sampled from the Born rule.
    pub fn measure_collective<M: JointMeasurement + ?Sized, R: Rng + ?Sized>(
        &self,
        order: &[usize],
        povm: &M,
        rng: &mut R,
    ) -> Result<usize, Error> {
        let pattern = Pattern(order.iter().map(|&i| self.spins[i]).collect());
        let psi = pattern_state(&pattern, &self.a_z)?;
        let probs = povm.probabilities(&psi)?;
        let u: f64 = rng.gen_range(0.0..1.0);
        let total: f64 = probs.iter().sum();
        let mut acc = 0.0;
        for (j, p) in probs.iter().enumerate() {
            acc += p / total;
            if u < acc {
                return Ok(j);
            }
        }
        Ok(probs.len() - 1)
    }

    /// Full collapsed state of particle `index` (test and referee use).
    pub fn state(&self, index: usize) -> PureState {
        spin_state(&self.a_z, self.spins[index])
    }

    pub fn referee_truth(&self) -> Direction {
        self.a_z
    }
}

/// Bob's answer and the strategy that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub direction: Direction,
    pub strategy: String,
}

/// Reproducibility record of one run. `truth` is referee-only and is never
/// part of the serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub config: ProtocolConfig,
    pub outcomes: Vec<OutcomeRecord>,
    pub estimate: Option<EstimateRecord>,
    pub truth: Option<GroundTruth>,
}

#[derive(Serialize, Deserialize)]
struct WireConfig {
    n: usize,
    seed: u64,
    hemisphere: Option<Direction>,
}

#[derive(Serialize, Deserialize)]
struct WireEstimate {
    #[serde(serialize_with = "crate::numfmt::f17")]
    x: f64,
    #[serde(serialize_with = "crate::numfmt::f17")]
    y: f64,
    #[serde(serialize_with = "crate::numfmt::f17")]
    z: f64,
    strategy: String,
}

#[derive(Serialize, Deserialize)]
struct WireTranscript {
    config: WireConfig,
    outcomes: Vec<Outcome>,
    estimate: Option<WireEstimate>,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        let wire = WireTranscript {
            config: WireConfig {
                n: self.config.n_particles,
                seed: self.config.seed,
                hemisphere: self.config.hemisphere_hint,
            },
            outcomes: self.outcomes.iter().map(|o| o.alice_outcome).collect(),
            estimate: self.estimate.as_ref().map(|e| WireEstimate {
                x: e.direction.x(),
                y: e.direction.y(),
                z: e.direction.z(),
                strategy: e.strategy.clone(),
            }),
        };
        serde_json::to_string(&wire).expect("transcript serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, Error> {
        let wire: WireTranscript =
            serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("transcript: {e}")))?;
        if wire.outcomes.len() != wire.config.n {
            return Err(Error::InvalidInput(format!(
                "transcript lists {} outcomes for n = {}",
                wire.outcomes.len(),
                wire.config.n
            )));
        }
        let estimate = match wire.estimate {
            Some(e) => Some(EstimateRecord {
                direction: Direction::new(e.x, e.y, e.z)
                    .map_err(|err| Error::InvalidInput(err.to_string()))?,
                strategy: e.strategy,
            }),
            None => None,
        };
        Ok(Transcript {
            config: ProtocolConfig {
                n_particles: wire.config.n,
                seed: wire.config.seed,
                hemisphere_hint: wire.config.hemisphere,
            },
            outcomes: wire
                .outcomes
                .into_iter()
                .enumerate()
                .map(|(index, alice_outcome)| OutcomeRecord { index, alice_outcome })
                .collect(),
            estimate,
            truth: None,
        })
    }
}

impl From<LinalgError> for Error {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::SizeLimit(d) => Error::SizeLimit(format!("dimension {d} exceeds {MAX_DIM}")),
            other => Error::Linalg(other),
        }
    }
}
