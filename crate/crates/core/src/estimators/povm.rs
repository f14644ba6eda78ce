//! Joint measurements and the averaged-fidelity objective.
//!
//! For a pattern `p` and prior grid `{(n_g, w_g)}`, outcome `j` of a POVM
//! `{M_j}` with guess `m_j` scores
//!
//! ```text
//! F = Σ_g w_g Σ_j tr(M_j ρ(n_g)) (1 + n_g·m_j)/2 = Σ_j tr(M_j W_j),
//! W_j = Σ_g w_g (1 + n_g·m_j)/2 ρ(n_g).
//! ```
//!
//! The fidelity is affine in `n_g`, so every `W_j` is a combination of four
//! fixed moment operators `R_0 = Σ w ρ` and `R_k = Σ w n_k ρ`:
//! `W_j = (R_0 + m_j·R)/2`. [`ScoreModel`] holds those moments.

use crate::bloch::{direction_fidelity, Direction, SphereGrid};
use crate::linalg::{eigh, trace_product, ComplexMatrix, HermitianOperator, PureState};
use crate::protocol::{pattern_state, Pattern};
use crate::{Error, Result};
use num_complex::Complex64;

/// Frobenius residual allowed in Σ M_j = I.
pub const COMPLETENESS_TOL: f64 = 1e-8;
/// Residual above which completeness is re-imposed.
pub const REPROJECT_TOL: f64 = 1e-10;
/// Smallest eigenvalue allowed in a POVM element.
pub const PSD_FLOOR: f64 = -1e-10;
/// Objective drop that triggers a rollback.
pub const ROLLBACK_TOL: f64 = 1e-10;
/// Eigenvalues below this fraction of the trace count as null.
const NULL_REL: f64 = 1e-12;

/// Positive operators summing to the identity, one guess per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
    guesses: Vec<Direction>,
}

impl Povm {
    /// Checks shapes, positivity and completeness.
    pub fn new(elements: Vec<HermitianOperator>, guesses: Vec<Direction>) -> Result<Self> {
        let povm = Self::from_parts(elements, guesses)?;
        let resid = povm.completeness_residual();
        if resid > COMPLETENESS_TOL {
            return Err(Error::InvalidInput(format!("POVM completeness residual {resid:e}")));
        }
        let min = povm.min_eigenvalue()?;
        if min < PSD_FLOOR {
            return Err(Error::InvalidInput(format!("POVM element eigenvalue {min:e}")));
        }
        Ok(povm)
    }

    /// Shape checks only.
    pub fn from_parts(elements: Vec<HermitianOperator>, guesses: Vec<Direction>) -> Result<Self> {
        if elements.is_empty() || elements.len() != guesses.len() {
            return Err(Error::InvalidInput(format!(
                "{} elements for {} guesses",
                elements.len(),
                guesses.len()
            )));
        }
        let d = elements[0].dim();
        if elements.iter().any(|e| e.dim() != d) {
            return Err(Error::InvalidInput("POVM elements differ in dimension".into()));
        }
        Ok(Povm { elements, guesses })
    }

    /// Whitens arbitrary PSD operators into a POVM with the S^{−1/2} sandwich.
    pub fn complete(elements: Vec<HermitianOperator>, guesses: Vec<Direction>) -> Result<Self> {
        let povm = Self::from_parts(elements, guesses)?;
        let elements = complete_elements(povm.elements)?;
        Ok(Povm { elements, guesses: povm.guesses })
    }

    pub fn trivial(dim: usize, guess: Direction) -> Self {
        Povm { elements: vec![HermitianOperator::identity(dim)], guesses: vec![guess] }
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn guesses(&self) -> &[Direction] {
        &self.guesses
    }

    pub fn with_guesses(&self, guesses: Vec<Direction>) -> Result<Self> {
        Self::from_parts(self.elements.clone(), guesses)
    }

    pub fn sum(&self) -> HermitianOperator {
        let mut s = HermitianOperator::zeros(self.dim());
        for e in &self.elements {
            s.add_scaled(1.0, e);
        }
        s
    }

    /// ‖Σ M_j − I‖_F.
    pub fn completeness_residual(&self) -> f64 {
        (self.sum().matrix() - &ComplexMatrix::identity(self.dim())).frobenius_norm()
    }

    /// Smallest eigenvalue across all elements.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for e in &self.elements {
            min = min.min(crate::linalg::min_eigenvalue(e)?);
        }
        Ok(min)
    }

    /// Born-rule probabilities ⟨ψ|M_j|ψ⟩, clipped at zero.
    pub fn probabilities(&self, psi: &PureState) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|e| Ok(e.expectation(psi.amplitudes())?.max(0.0)))
            .collect()
    }

    /// Conjugates every element by `u` and maps every guess through `rotate`.
    pub fn transformed(&self, u: &ComplexMatrix, rotate: impl Fn(&Direction) -> Direction) -> Result<Self> {
        let elements = self.elements.iter().map(|e| e.conjugate_by(u)).collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Povm { elements, guesses: self.guesses.iter().map(rotate).collect() })
    }
}

/// Something Bob can apply to a joint state to draw an outcome and guess.
pub trait JointMeasurement {
    fn probabilities(&self, psi: &PureState) -> Result<Vec<f64>>;
    fn guesses(&self) -> &[Direction];
}

impl JointMeasurement for Povm {
    fn probabilities(&self, psi: &PureState) -> Result<Vec<f64>> {
        Povm::probabilities(self, psi)
    }

    fn guesses(&self) -> &[Direction] {
        &self.guesses
    }
}

/// Re-imposes Σ M_j = I by the S^{−1/2} sandwich. Whatever lies outside the
/// support of S is shared equally among the outcomes.
pub(crate) fn complete_elements(elements: Vec<HermitianOperator>) -> Result<Vec<HermitianOperator>> {
    let dim = elements[0].dim();
    let mut s = HermitianOperator::zeros(dim);
    for e in &elements {
        s.add_scaled(1.0, e);
    }
    let (inv, support) = invsqrt_with_support(&s)?;
    let share = 1.0 / elements.len() as f64;
    let complement = HermitianOperator::identity(dim).add(&support.scale(-1.0)).scale(share);
    elements
        .iter()
        .map(|e| Ok(inv.sandwich(e)?.add(&complement)))
        .collect()
}

/// Pseudo-inverse square root and support projector of a PSD operator, with
/// null space relative to its trace.
fn invsqrt_with_support(h: &HermitianOperator) -> Result<(HermitianOperator, HermitianOperator)> {
    let trace = h.real_trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Numerical(format!("operator to normalize has trace {trace:e}")));
    }
    let (inv, support, _) = crate::linalg::invsqrt_with_support(h, NULL_REL * trace)?;
    Ok((inv, support))
}

/// Moment operators of the state family `ρ(n) = |pattern_state(p, n)⟩⟨·|`
/// over a prior grid.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    r0: HermitianOperator,
    moments: [HermitianOperator; 3],
}

impl ScoreModel {
    pub fn new(pattern: &Pattern, grid: &SphereGrid) -> Result<Self> {
        pattern.check_size()?;
        let d = pattern.dim();
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); d * d]; 4];
        for (n, w) in grid.iter() {
            let psi = pattern_state(pattern, n)?;
            let a = psi.amplitudes();
            let coeffs = [w, w * n.x(), w * n.y(), w * n.z()];
            for i in 0..d {
                for j in i..d {
                    let v = a[i] * a[j].conj();
                    for (m, c) in acc.iter_mut().zip(coeffs) {
                        m[i * d + j] += v * c;
                    }
                }
            }
        }
        let mut ops = acc.into_iter().map(|mut m| {
            for i in 0..d {
                for j in 0..i {
                    m[i * d + j] = m[j * d + i].conj();
                }
            }
            HermitianOperator::new(ComplexMatrix::from_row_major(d, d, m).expect("square"))
        });
        let r0 = ops.next().unwrap()?;
        let moments = [ops.next().unwrap()?, ops.next().unwrap()?, ops.next().unwrap()?];
        Ok(ScoreModel { r0, moments })
    }

    pub fn dim(&self) -> usize {
        self.r0.dim()
    }

    /// Σ_g w_g ρ(n_g).
    pub fn prior_state(&self) -> &HermitianOperator {
        &self.r0
    }

    /// W = Σ_g w_g f(n_g, m) ρ(n_g).
    pub fn score(&self, guess: &Direction) -> HermitianOperator {
        let mut w = self.r0.clone();
        for (k, r) in self.moments.iter().enumerate() {
            w.add_scaled(guess.component(k), r);
        }
        w.scale(0.5)
    }

    pub fn scores(&self, guesses: &[Direction]) -> Vec<HermitianOperator> {
        guesses.iter().map(|m| self.score(m)).collect()
    }

    /// Σ_j tr(M_j W_j).
    pub fn objective(&self, povm: &Povm) -> Result<f64> {
        self.check_dim(povm)?;
        let mut f = 0.0;
        for (e, m) in povm.elements.iter().zip(&povm.guesses) {
            f += trace_product(e, &self.score(m))?;
        }
        Ok(f)
    }

    /// v = Σ_g w_g tr(M ρ(n_g)) n_g.
    pub fn bloch_moment(&self, element: &HermitianOperator) -> Result<[f64; 3]> {
        let mut v = [0.0; 3];
        for (k, r) in self.moments.iter().enumerate() {
            v[k] = trace_product(element, r)?;
        }
        Ok(v)
    }

    /// Best guess for each outcome given the elements; keeps the previous
    /// guess where |v_j| < 1e-12.
    pub fn guess_update(&self, povm: &Povm) -> Result<Povm> {
        self.check_dim(povm)?;
        let guesses = povm
            .elements
            .iter()
            .zip(&povm.guesses)
            .map(|(e, old)| {
                let v = self.bloch_moment(e)?;
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                Ok(if norm < 1e-12 { *old } else { Direction::from_vector(v).unwrap_or(*old) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Povm { elements: povm.elements.clone(), guesses })
    }

    fn check_dim(&self, povm: &Povm) -> Result<()> {
        if povm.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "POVM of dim {} against a model of dim {}",
                povm.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Restricts the model to the support of `R_0`, which contains every
    /// `ρ(n_g)`. Returns the reduced model and the isometry `V` (d × r) with
    /// `R = V R' V†`.
    pub fn compressed(&self) -> Result<(ScoreModel, ComplexMatrix)> {
        let e = eigh(&self.r0)?;
        let max = e.values.last().copied().unwrap_or(0.0);
        if !(max > 0.0) {
            return Err(Error::Numerical("prior state vanishes".into()));
        }
        let keep: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > 1e-9 * max).collect();
        let d = self.dim();
        let mut v = ComplexMatrix::zeros(d, keep.len());
        for (col, &k) in keep.iter().enumerate() {
            for r in 0..d {
                v[(r, col)] = e.vectors[(r, k)];
            }
        }
        let vh = v.adjoint();
        let reduce = |h: &HermitianOperator| h.conjugate_by(&vh);
        let model = ScoreModel {
            r0: reduce(&self.r0)?,
            moments: [reduce(&self.moments[0])?, reduce(&self.moments[1])?, reduce(&self.moments[2])?],
        };
        Ok((model, v))
    }

    /// First moments `R_x`, `R_y`, `R_z`.
    pub fn moments(&self) -> &[HermitianOperator; 3] {
        &self.moments
    }
}

/// Per-outcome score operators `W_j` for the given guesses.
pub fn score_operators(
    pattern: &Pattern,
    guesses: &[Direction],
    grid: &SphereGrid,
) -> Result<Vec<HermitianOperator>> {
    Ok(ScoreModel::new(pattern, grid)?.scores(guesses))
}

/// Averaged fidelity of `povm` on the pattern family under the grid prior.
pub fn mean_fidelity(povm: &Povm, pattern: &Pattern, grid: &SphereGrid) -> Result<f64> {
    ScoreModel::new(pattern, grid)?.objective(povm)
}

/// Objective evaluated node by node, without the moment reduction.
pub fn mean_fidelity_direct(povm: &Povm, pattern: &Pattern, grid: &SphereGrid) -> Result<f64> {
    if povm.dim() != pattern.dim() {
        return Err(Error::InvalidInput("POVM and pattern dimensions differ".into()));
    }
    let mut f = 0.0;
    for (n, w) in grid.iter() {
        let psi = pattern_state(pattern, n)?;
        let probs = povm.probabilities(&psi)?;
        for (p, m) in probs.iter().zip(povm.guesses()) {
            f += w * p * direction_fidelity(n, m);
        }
    }
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct PovmUpdate {
    pub povm: Povm,
    pub objective_before: f64,
    pub objective_after: f64,
    pub rolled_back: bool,
    pub completeness_residual: f64,
}

fn objective_with(povm: &Povm, scores: &[HermitianOperator]) -> Result<f64> {
    let mut f = 0.0;
    for (e, w) in povm.elements.iter().zip(scores) {
        f += trace_product(e, w)?;
    }
    Ok(f)
}

/// One fixed-point step for max Σ_j tr(M_j W_j):
/// `M_j ← Λ^{−1/2} W_j M_j W_j Λ^{−1/2}` with `Λ = Σ_j W_j M_j W_j`.
///
/// Falls back to the input POVM when the objective drops by more than 1e-10.
pub fn povm_update(povm: &Povm, scores: &[HermitianOperator]) -> Result<PovmUpdate> {
    if scores.len() != povm.len() || scores.iter().any(|w| w.dim() != povm.dim()) {
        return Err(Error::InvalidInput("scores do not match the POVM".into()));
    }
    let before = objective_with(povm, scores)?;
    let pulled = povm
        .elements
        .iter()
        .zip(scores)
        .map(|(m, w)| w.sandwich(m))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut lambda = HermitianOperator::zeros(povm.dim());
    for x in &pulled {
        lambda.add_scaled(1.0, x);
    }
    let (inv, support) = invsqrt_with_support(&lambda)?;
    let share = 1.0 / povm.len() as f64;
    let complement = HermitianOperator::identity(povm.dim()).add(&support.scale(-1.0)).scale(share);
    let mut elements = pulled
        .iter()
        .map(|x| Ok(inv.sandwich(x)?.add(&complement)))
        .collect::<Result<Vec<_>>>()?;

    let mut candidate = Povm { elements: elements.clone(), guesses: povm.guesses.clone() };
    if candidate.completeness_residual() > REPROJECT_TOL {
        elements = complete_elements(elements)?;
        candidate = Povm { elements, guesses: povm.guesses.clone() };
    }
    let residual = candidate.completeness_residual();
    if residual > COMPLETENESS_TOL {
        return Err(Error::Numerical(format!("POVM update lost completeness ({residual:e})")));
    }
    let after = objective_with(&candidate, scores)?;
    if after < before - ROLLBACK_TOL {
        return Ok(PovmUpdate {
            completeness_residual: povm.completeness_residual(),
            povm: povm.clone(),
            objective_before: before,
            objective_after: before,
            rolled_back: true,
        });
    }
    Ok(PovmUpdate {
        povm: candidate,
        objective_before: before,
        objective_after: after,
        rolled_back: false,
        completeness_residual: residual,
    })
}

/// Optimal guess per outcome for fixed elements.
pub fn guess_update(povm: &Povm, pattern: &Pattern, grid: &SphereGrid) -> Result<Povm> {
    ScoreModel::new(pattern, grid)?.guess_update(povm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{fibonacci_grid, random_direction, spin_state, Rotation, Spin};
    use crate::linalg::{kron, min_eigenvalue};
    use crate::protocol::rng_from_seed;
    use rand::Rng;

    fn pat(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    fn random_povm(rng: &mut impl Rng, dim: usize, outcomes: usize) -> Povm {
        let elements = (0..outcomes)
            .map(|_| {
                let data = (0..dim * dim)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                let b = ComplexMatrix::from_row_major(dim, dim, data).unwrap();
                HermitianOperator::new(b.matmul(&b.adjoint()).unwrap()).unwrap()
            })
            .collect();
        let guesses = (0..outcomes).map(|_| random_direction(rng)).collect();
        Povm::complete(elements, guesses).unwrap()
    }

    fn tensor_power(u: &ComplexMatrix, n: usize) -> ComplexMatrix {
        let mut out = u.clone();
        for _ in 1..n {
            out = kron(&out, u).unwrap();
        }
        out
    }

    #[test]
    fn score_operator_of_single_guess_has_half_trace() {
        let grid = fibonacci_grid(2000);
        let w = score_operators(&pat("u"), &[Direction::PLUS_Z], &grid).unwrap();
        let t = w[0].real_trace();
        assert!((t - 0.5).abs() < 0.005, "trace {t}");
        assert!(min_eigenvalue(&w[0]).unwrap() >= -1e-12);
    }

    #[test]
    fn identical_guesses_identical_scores() {
        let grid = fibonacci_grid(300);
        let g = Direction::new(0.0, 0.6, 0.8).unwrap();
        let w = score_operators(&pat("ud"), &[g, g, g], &grid).unwrap();
        assert_eq!(w[0], w[1]);
        assert_eq!(w[1], w[2]);
    }

    /// Moment route against the defining sum Σ_g w_g f(n_g, m) ρ(n_g).
    #[test]
    fn score_operators_match_direct_sum() {
        let grid = fibonacci_grid(257);
        let mut rng = rng_from_seed(8);
        for p in ["u", "ud", "udd"] {
            let pattern = pat(p);
            let guesses: Vec<_> = (0..4).map(|_| random_direction(&mut rng)).collect();
            let fast = score_operators(&pattern, &guesses, &grid).unwrap();
            for (m, w) in guesses.iter().zip(&fast) {
                let mut direct = HermitianOperator::zeros(pattern.dim());
                for (n, wt) in grid.iter() {
                    let rho = pattern_state(&pattern, n).unwrap().density();
                    direct.add_scaled(wt * direction_fidelity(n, m), &rho);
                }
                assert!(direct.matrix().max_abs_diff(w.matrix()) < 1e-13);
            }
        }
    }

    #[test]
    fn scores_rotate_covariantly() {
        let grid = fibonacci_grid(500);
        let mut rng = rng_from_seed(9);
        let pattern = pat("ud");
        let guesses: Vec<_> = (0..3).map(|_| random_direction(&mut rng)).collect();
        let base = score_operators(&pattern, &guesses, &grid).unwrap();
        let rot = Rotation::random(&mut rng);
        let rotated_guesses: Vec<_> = guesses.iter().map(|g| rot.apply(g)).collect();
        let rotated = score_operators(&pattern, &rotated_guesses, &grid.rotated(&rot)).unwrap();
        for (a, b) in base.iter().zip(&rotated) {
            let ea = eigh(a).unwrap().values;
            let eb = eigh(b).unwrap().values;
            for (x, y) in ea.iter().zip(&eb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blind_guess_scores_one_half() {
        let grid = fibonacci_grid(2000);
        for p in ["u", "ud", "uu"] {
            let pattern = pat(p);
            let povm = Povm::trivial(pattern.dim(), Direction::new(0.0, 0.8, -0.6).unwrap());
            let f = mean_fidelity(&povm, &pattern, &grid).unwrap();
            assert!((f - 0.5).abs() < 0.01, "{p}: {f}");
        }
    }

    #[test]
    fn single_point_prior_is_exact() {
        let node = Direction::new(0.6, 0.0, 0.8).unwrap();
        let grid = SphereGrid::new(vec![node], vec![1.0]).unwrap();
        let guess = Direction::PLUS_Z;
        let f = mean_fidelity(&Povm::trivial(2, guess), &pat("u"), &grid).unwrap();
        assert!((f - direction_fidelity(&node, &guess)).abs() < 1e-15);
    }

    #[test]
    fn mean_fidelity_matches_direct_route_and_range() {
        let grid = fibonacci_grid(400);
        let mut rng = rng_from_seed(10);
        for p in ["u", "ud", "uu"] {
            let pattern = pat(p);
            let povm = random_povm(&mut rng, pattern.dim(), 5);
            let a = mean_fidelity(&povm, &pattern, &grid).unwrap();
            let b = mean_fidelity_direct(&povm, &pattern, &grid).unwrap();
            assert!((a - b).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&a));
        }
        let bad = Povm::trivial(4, Direction::PLUS_Z);
        assert!(mean_fidelity(&bad, &pat("u"), &grid).is_err());
    }

    #[test]
    fn mean_fidelity_is_rotation_covariant() {
        let grid = fibonacci_grid(600);
        let mut rng = rng_from_seed(11);
        for p in ["u", "ud"] {
            let pattern = pat(p);
            let povm = random_povm(&mut rng, pattern.dim(), 6);
            let base = mean_fidelity(&povm, &pattern, &grid).unwrap();
            for _ in 0..5 {
                let rot = Rotation::random(&mut rng);
                let u = tensor_power(&rot.su2(), pattern.len());
                let moved = povm.transformed(&u, |g| rot.apply(g)).unwrap();
                let f = mean_fidelity(&moved, &pattern, &grid.rotated(&rot)).unwrap();
                assert!((f - base).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_scores_are_a_fixed_point() {
        let mut rng = rng_from_seed(12);
        let povm = random_povm(&mut rng, 4, 5);
        let scores = vec![HermitianOperator::identity(4); 5];
        let up = povm_update(&povm, &scores).unwrap();
        for (a, b) in up.povm.elements().iter().zip(povm.elements()) {
            assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-10);
        }
    }

    #[test]
    fn povm_update_never_loses_objective_or_completeness() {
        let grid = fibonacci_grid(500);
        let model = ScoreModel::new(&pat("u"), &grid).unwrap();
        let mut rng = rng_from_seed(13);
        for _ in 0..100 {
            let povm = random_povm(&mut rng, 2, 4);
            let scores = model.scores(povm.guesses());
            let up = povm_update(&povm, &scores).unwrap();
            assert!(up.objective_after >= up.objective_before - 1e-10);
            assert!(up.povm.completeness_residual() <= 1e-8);
            assert!(up.povm.min_eigenvalue().unwrap() >= -1e-10);
            assert!((model.objective(&up.povm).unwrap() - up.objective_after).abs() < 1e-12);
        }
    }

    #[test]
    fn povm_update_handles_rank_deficient_scores() {
        // Family spans only the symmetric subspace of two qubits.
        let grid = fibonacci_grid(200);
        let model = ScoreModel::new(&pat("uu"), &grid).unwrap();
        let mut rng = rng_from_seed(14);
        let povm = random_povm(&mut rng, 4, 6);
        let up = povm_update(&povm, &model.scores(povm.guesses())).unwrap();
        assert!(up.povm.completeness_residual() <= 1e-8);
        assert!(up.povm.min_eigenvalue().unwrap() >= -1e-10);
        let zero = vec![HermitianOperator::zeros(4); 6];
        assert!(matches!(povm_update(&povm, &zero), Err(Error::Numerical(_))));
    }

    #[test]
    fn guess_update_points_along_projector() {
        let grid = fibonacci_grid(2000);
        let up = spin_state(&Direction::PLUS_Z, Spin::Up).density();
        let down = spin_state(&Direction::PLUS_Z, Spin::Down).density();
        let povm = Povm::new(vec![up, down], vec![Direction::PLUS_X, Direction::PLUS_X]).unwrap();
        let updated = guess_update(&povm, &pat("u"), &grid).unwrap();
        let angle = crate::bloch::angle_between(&updated.guesses()[0], &Direction::PLUS_Z).to_degrees();
        assert!(angle < 1.0, "angle {angle}°");
        let angle = crate::bloch::angle_between(&updated.guesses()[1], &Direction::MINUS_Z).to_degrees();
        assert!(angle < 1.0);
    }

    #[test]
    fn guess_update_keeps_guess_for_isotropic_outcome() {
        // Antipodally balanced, so every first moment vanishes exactly.
        let axes = [Direction::PLUS_X, Direction::PLUS_Y, Direction::PLUS_Z];
        let nodes: Vec<Direction> = axes.iter().flat_map(|a| [*a, -*a]).collect();
        let grid = SphereGrid::new(nodes, vec![1.0 / 6.0; 6]).unwrap();
        let half = HermitianOperator::identity(2).scale(0.5);
        let keep = Direction::new(0.0, 0.6, 0.8).unwrap();
        let povm = Povm::new(vec![half.clone(), half], vec![keep, Direction::PLUS_X]).unwrap();
        let model = ScoreModel::new(&pat("u"), &grid).unwrap();
        let v = model.bloch_moment(&povm.elements()[0]).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12), "{v:?}");
        let updated = model.guess_update(&povm).unwrap();
        assert_eq!(updated.guesses()[0], keep);
    }

    #[test]
    fn guess_update_never_decreases_objective() {
        let grid = fibonacci_grid(500);
        let mut rng = rng_from_seed(15);
        for p in ["u", "uu", "ud"] {
            let model = ScoreModel::new(&pat(p), &grid).unwrap();
            for _ in 0..30 {
                let povm = random_povm(&mut rng, model.dim(), 4);
                let before = model.objective(&povm).unwrap();
                let after = model.objective(&model.guess_update(&povm).unwrap()).unwrap();
                assert!(after >= before - 1e-12);
            }
        }
    }

    #[test]
    fn compression_preserves_scores() {
        let grid = fibonacci_grid(300);
        let model = ScoreModel::new(&pat("uu"), &grid).unwrap();
        let (reduced, v) = model.compressed().unwrap();
        assert_eq!(reduced.dim(), 3);
        let g = Direction::new(0.6, 0.0, -0.8).unwrap();
        let rebuilt = reduced.score(&g).conjugate_by(&v).unwrap();
        assert!(rebuilt.matrix().max_abs_diff(model.score(&g).matrix()) < 1e-12);
        let (reduced, _) = ScoreModel::new(&pat("ud"), &grid).unwrap().compressed().unwrap();
        assert_eq!(reduced.dim(), 4);
    }

    #[test]
    fn povm_validation() {
        let half = HermitianOperator::identity(2).scale(0.5);
        assert!(Povm::new(vec![half.clone()], vec![Direction::PLUS_Z]).is_err());
        assert!(Povm::new(vec![half.clone(), half.clone()], vec![Direction::PLUS_Z]).is_err());
        let neg = HermitianOperator::diag(&[1.5, 0.5]);
        let neg2 = HermitianOperator::diag(&[-0.5, 0.5]);
        assert!(Povm::new(vec![neg, neg2], vec![Direction::PLUS_Z; 2]).is_err());
    }
}
