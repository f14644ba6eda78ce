//! Bloch-sphere geometry: directions, spin states, fidelity, sphere grids.

use crate::linalg::{ComplexMatrix, PureState};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("not a direction: ({0}, {1}, {2})")]
pub struct InvalidDirection(pub f64, pub f64, pub f64);

/// Unit vector on the sphere. The Earth frame puts +z at the North pole and
/// +x on the prime meridian at the equator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    #[serde(serialize_with = "crate::numfmt::f17")]
    x: f64,
    #[serde(serialize_with = "crate::numfmt::f17")]
    y: f64,
    #[serde(serialize_with = "crate::numfmt::f17")]
    z: f64,
}

impl TryFrom<RawVector> for Direction {
    type Error = InvalidDirection;

    fn try_from(v: RawVector) -> Result<Self, Self::Error> {
        Direction::new(v.x, v.y, v.z)
    }
}

impl From<Direction> for RawVector {
    fn from(d: Direction) -> Self {
        RawVector { x: d.x, y: d.y, z: d.z }
    }
}

/// Vectors this close to unit length are accepted and renormalized.
const ACCEPT_TOL: f64 = 1e-9;

impl Direction {
    pub const PLUS_X: Direction = Direction { x: 1.0, y: 0.0, z: 0.0 };
    pub const PLUS_Y: Direction = Direction { x: 0.0, y: 1.0, z: 0.0 };
    pub const PLUS_Z: Direction = Direction { x: 0.0, y: 0.0, z: 1.0 };
    pub const MINUS_Z: Direction = Direction { x: 0.0, y: 0.0, z: -1.0 };

    /// Accepts a vector within 1e-9 of unit length.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, InvalidDirection> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > ACCEPT_TOL {
            return Err(InvalidDirection(x, y, z));
        }
        Ok(Self::unchecked_normalize(x, y, z, norm))
    }

    /// Normalizes any finite nonzero vector.
    pub fn from_vector(v: [f64; 3]) -> Option<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return None;
        }
        Some(Self::unchecked_normalize(v[0], v[1], v[2], norm))
    }

    fn unchecked_normalize(x: f64, y: f64, z: f64, norm: f64) -> Self {
        if norm == 1.0 {
            Direction { x, y, z }
        } else {
            Direction { x: x / norm, y: y / norm, z: z / norm }
        }
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        Direction { x: s * phi.cos(), y: s * phi.sin(), z: theta.cos() }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(&self, k: usize) -> f64 {
        self.to_array()[k]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_residual(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z - 1.0).abs()
    }
}

impl std::ops::Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction { x: -self.x, y: -self.y, z: -self.z }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn flip(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Spin::Up => 'u',
            Spin::Down => 'd',
        }
    }
}

/// Spin-½ eigenstate along `n`: (cos θ/2, e^{iφ} sin θ/2) for up and the
/// orthogonal (−e^{−iφ} sin θ/2, cos θ/2) for down.
pub fn spin_state(n: &Direction, sign: Spin) -> PureState {
    let (c, s, phase) = half_angles(n);
    let amps = match sign {
        Spin::Up => vec![Complex64::new(c, 0.0), phase * s],
        Spin::Down => vec![-phase.conj() * s, Complex64::new(c, 0.0)],
    };
    PureState::new(amps).expect("spin states are normalized")
}

fn half_angles(n: &Direction) -> (f64, f64, Complex64) {
    let c = ((1.0 + n.z) / 2.0).max(0.0).sqrt();
    let s = ((1.0 - n.z) / 2.0).max(0.0).sqrt();
    let rho = n.x.hypot(n.y);
    let phase = if rho > 0.0 {
        Complex64::new(n.x / rho, n.y / rho)
    } else {
        Complex64::new(1.0, 0.0)
    };
    // Renormalize so |c|² + |s|² = 1 to round-off.
    let norm = (c * c + s * s).sqrt();
    (c / norm, s / norm, phase)
}

/// Fidelity score (1 + a·b)/2 between a true and a guessed direction.
pub fn direction_fidelity(a: &Direction, b: &Direction) -> f64 {
    ((1.0 + a.dot(b)) / 2.0).clamp(0.0, 1.0)
}

/// Angle in radians, in [0, π].
pub fn angle_between(a: &Direction, b: &Direction) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Uniform sample from the sphere.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Direction {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let rho = (1.0 - z * z).max(0.0).sqrt();
    let (x, y) = (rho * phi.cos(), rho * phi.sin());
    Direction::from_vector([x, y, z]).expect("sampled vector is nonzero")
}

/// Uniform sample from the open hemisphere `{n : n·hint > 0}`.
pub fn random_direction_in_hemisphere<R: Rng + ?Sized>(rng: &mut R, hint: &Direction) -> Direction {
    loop {
        let n = random_direction(rng);
        let d = n.dot(hint);
        if d > 0.0 {
            return n;
        }
        if d < 0.0 {
            return -n;
        }
    }
}

/// Latitude and longitude in degrees.
pub fn direction_to_latlon(n: &Direction) -> (f64, f64) {
    let lat = n.z.clamp(-1.0, 1.0).asin().to_degrees();
    let mut lon = n.y.atan2(n.x).to_degrees();
    if lon <= -180.0 {
        lon += 360.0;
    }
    (lat, lon)
}

/// Quadrature nodes on the sphere with non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid {
    nodes: Vec<Direction>,
    weights: Vec<f64>,
}

impl SphereGrid {
    pub fn new(nodes: Vec<Direction>, weights: Vec<f64>) -> Option<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return None;
        }
        Some(SphereGrid { nodes, weights })
    }

    pub fn nodes(&self) -> &[Direction] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Direction, f64)> {
        self.nodes.iter().zip(self.weights.iter().copied())
    }

    /// Same weights, every node rotated.
    pub fn rotated(&self, rot: &Rotation) -> Self {
        SphereGrid {
            nodes: self.nodes.iter().map(|n| rot.apply(n)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Nodes in the open hemisphere `{n : n·hint > 0}`, reweighted to sum to
    /// one. `None` if no node survives.
    pub fn restricted_to_hemisphere(&self, hint: &Direction) -> Option<Self> {
        let (nodes, weights): (Vec<Direction>, Vec<f64>) =
            self.iter().filter(|(n, _)| n.dot(hint) > 0.0).map(|(n, w)| (*n, w)).unzip();
        let total: f64 = weights.iter().sum();
        if nodes.is_empty() || !(total > 0.0) {
            return None;
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Some(SphereGrid { nodes, weights })
    }

    /// Prior-weighted integral of `f` over the grid.
    pub fn integrate(&self, f: impl Fn(&Direction) -> f64) -> f64 {
        self.iter().map(|(n, w)| w * f(n)).sum()
    }
}

/// Golden-angle spiral with `count` equal-weight nodes.
pub fn fibonacci_grid(count: usize) -> SphereGrid {
    assert!(count >= 1, "grid needs at least one node");
    let golden = PI * (3.0 - 5f64.sqrt());
    let g = count as f64;
    let nodes = (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / g;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Direction::from_vector([rho * phi.cos(), rho * phi.sin(), z]).expect("unit node")
        })
        .collect();
    SphereGrid { nodes, weights: vec![1.0 / g; count] }
}

/// Rotation by `angle` radians (right-handed) about `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    pub axis: Direction,
    pub angle: f64,
}

impl Rotation {
    pub fn new(axis: Direction, angle: f64) -> Self {
        Rotation { axis, angle }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Rotation { axis: random_direction(rng), angle: rng.gen_range(0.0..2.0 * PI) }
    }

    pub fn apply(&self, v: &Direction) -> Direction {
        let k = self.axis;
        let (s, c) = self.angle.sin_cos();
        let kv = k.dot(v);
        let cross = [k.y * v.z - k.z * v.y, k.z * v.x - k.x * v.z, k.x * v.y - k.y * v.x];
        let out = [
            v.x * c + cross[0] * s + k.x * kv * (1.0 - c),
            v.y * c + cross[1] * s + k.y * kv * (1.0 - c),
            v.z * c + cross[2] * s + k.z * kv * (1.0 - c),
        ];
        Direction::from_vector(out).expect("rotation preserves length")
    }

    /// exp(−i·angle·(axis·σ)/2), which maps |n⟩⟨n| to |Rn⟩⟨Rn|.
    pub fn su2(&self) -> ComplexMatrix {
        let (s, c) = (self.angle / 2.0).sin_cos();
        let k = self.axis;
        let i = Complex64::new(0.0, 1.0);
        let entries = vec![
            c - i * s * k.z,
            (-i * k.x - k.y) * s,
            (-i * k.x + k.y) * s,
            c + i * s * k.z,
        ];
        ComplexMatrix::from_row_major(2, 2, entries).expect("2x2")
    }
}
