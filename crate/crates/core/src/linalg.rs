//! Dense complex linear algebra for qubit registers of up to eight qubits.
//!
//! Everything is row-major and small (at most 256 × 256), so the eigensolver
//! is a plain cyclic Jacobi sweep over the Hermitian matrix.

use num_complex::Complex64;
use std::ops::{Add, Index, IndexMut, Mul, Sub};
use thiserror::Error;

/// Largest supported dimension (eight qubits).
pub const MAX_DIM: usize = 1 << 8;

/// Eigenvalues above this (negative) floor are clipped to zero.
pub const CLIP_FLOOR: f64 = -1e-10;
/// Eigenvalues below this are treated as a positivity violation.
pub const NEGATIVE_LIMIT: f64 = -1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    SizeLimit(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("operator is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("state norm {0} is not 1")]
    NotNormalized(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::Numerical("non-finite matrix entry".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                m.data[i * b.len() + j] = ai * bj.conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(LinalgError::Shape(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix shapes must agree")
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.data.is_empty() || b.data.is_empty() {
        return Err(LinalgError::Shape("kron of an empty matrix".into()));
    }
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(LinalgError::SizeLimit(rows.max(cols)));
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let x = a[(i1, j1)];
            for i2 in 0..b.rows {
                for j2 in 0..b.cols {
                    out[(i1 * b.rows + i2, j1 * b.cols + j2)] = x * b[(i2, j2)];
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of two state vectors.
pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// A square matrix stored in its symmetrized form (H + H†)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(LinalgError::Shape(format!(
                "hermitian operator must be square, got {}x{}",
                matrix.rows, matrix.cols
            )));
        }
        if matrix.rows > MAX_DIM {
            return Err(LinalgError::SizeLimit(matrix.rows));
        }
        if matrix.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::Numerical("non-finite operator entry".into()));
        }
        Ok(Self::symmetrized(matrix))
    }

    fn symmetrized(mut m: ComplexMatrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            let d = m[(i, i)].re;
            m[(i, i)] = Complex64::new(d, 0.0);
            for j in (i + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        HermitianOperator { matrix: m }
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator { matrix: ComplexMatrix::identity(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator { matrix: ComplexMatrix::zeros(dim, dim) }
    }

    pub fn diag(values: &[f64]) -> Self {
        HermitianOperator { matrix: ComplexMatrix::diag(values) }
    }

    /// Projector |ψ⟩⟨ψ| (unnormalized if ψ is).
    pub fn projector(psi: &[Complex64]) -> Self {
        Self::symmetrized(ComplexMatrix::outer(psi, psi))
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianOperator { matrix: self.matrix.scale(Complex64::new(s, 0.0)) }
    }

    pub fn add(&self, other: &Self) -> Self {
        HermitianOperator { matrix: &self.matrix + &other.matrix }
    }

    /// Accumulate `s · other` in place.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!(self.dim(), other.dim());
        for (a, b) in self.matrix.data.iter_mut().zip(&other.matrix.data) {
            *a += b * s;
        }
    }

    /// `A · self · A†` for an arbitrary square `A`.
    pub fn conjugate_by(&self, a: &ComplexMatrix) -> Result<Self> {
        let m = a.matmul(&self.matrix)?.matmul(&a.adjoint())?;
        Ok(Self::symmetrized(m))
    }

    /// `self · other · self`, the sandwich of another operator.
    pub fn sandwich(&self, other: &Self) -> Result<Self> {
        let m = self.matrix.matmul(&other.matrix)?.matmul(&self.matrix)?;
        Ok(Self::symmetrized(m))
    }

    pub fn real_trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// ⟨ψ|H|ψ⟩.
    pub fn expectation(&self, psi: &[Complex64]) -> Result<f64> {
        let hv = self.matrix.mul_vec(psi)?;
        Ok(psi.iter().zip(&hv).map(|(a, b)| (a.conj() * b).re).sum())
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_residual(&self) -> f64 {
        self.matrix.max_abs_diff(&self.matrix.adjoint())
    }
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    /// `V f(Λ) V†` for a real function of the spectrum.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let n = self.values.len();
        let v = &self.vectors;
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &fk) in fv.iter().enumerate() {
            if fk == 0.0 {
                continue;
            }
            for i in 0..n {
                let vik = v[(i, k)] * fk;
                if vik == ZERO {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)].conj();
                }
            }
        }
        HermitianOperator::symmetrized(out)
    }

    /// The `k`-th eigenvector.
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        (0..self.vectors.rows).map(|i| self.vectors[(i, k)]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn eigh(h: &HermitianOperator) -> Result<Eigen> {
    let n = h.dim();
    let mut a = h.matrix.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 || n == 1 {
        return Ok(Eigen { values: (0..n).map(|i| a[(i, i)].re).collect(), vectors: v });
    }
    let target = f64::EPSILON * scale;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= f64::MIN_POSITIVE || g < 1e-3 * target / n as f64 {
                    continue;
                }
                let phase = apq / g;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = 0.5 * (aqq - app) / g;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U acts on columns p, q: [[e^{iα}c, e^{iα}s], [-s, c]].
                let u_pp = phase * c;
                let u_pq = phase * s;
                let u_qp = Complex64::new(-s, 0.0);
                let u_qq = Complex64::new(c, 0.0);
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * u_pp + arq * u_qp;
                    a[(r, q)] = arp * u_pq + arq * u_qq;
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * u_pp + vrq * u_qp;
                    v[(r, q)] = vrp * u_pq + vrq * u_qq;
                }
                for col in 0..n {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = u_pp.conj() * apc + u_qp.conj() * aqc;
                    a[(q, col)] = u_pq.conj() * apc + u_qq.conj() * aqc;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(app - t * g, 0.0);
                a[(q, q)] = Complex64::new(aqq + t * g, 0.0);
            }
        }
    }
    if !converged {
        return Err(LinalgError::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, k)] = v[(r, src)];
        }
    }
    Ok(Eigen { values, vectors })
}

/// Square root and (pseudo-)inverse square root of a PSD operator.
///
/// Eigenvalues in `[-1e-10, 0)` are clipped to zero; anything below `-1e-8`
/// is rejected. Eigenvalues below `null_threshold` map to zero in the inverse.
pub fn psd_sqrt_and_invsqrt(
    h: &HermitianOperator,
    null_threshold: f64,
) -> Result<(HermitianOperator, HermitianOperator)> {
    let e = eigh(h)?;
    check_psd_spectrum(&e.values)?;
    let sqrt = e.reconstruct_with(|l| l.max(0.0).sqrt());
    let inv = e.reconstruct_with(|l| if l < null_threshold { 0.0 } else { 1.0 / l.sqrt() });
    Ok((sqrt, inv))
}

/// Pseudo-inverse square root together with the projector onto its support.
pub fn invsqrt_with_support(
    h: &HermitianOperator,
    null_threshold: f64,
) -> Result<(HermitianOperator, HermitianOperator, usize)> {
    let e = eigh(h)?;
    check_psd_spectrum(&e.values)?;
    let inv = e.reconstruct_with(|l| if l < null_threshold { 0.0 } else { 1.0 / l.sqrt() });
    let support = e.reconstruct_with(|l| if l < null_threshold { 0.0 } else { 1.0 });
    let rank = e.values.iter().filter(|&&l| l >= null_threshold).count();
    Ok((inv, support, rank))
}

fn check_psd_spectrum(values: &[f64]) -> Result<()> {
    match values.first() {
        Some(&min) if min < NEGATIVE_LIMIT => Err(LinalgError::NotPositive(min)),
        _ => Ok(()),
    }
}

/// Smallest eigenvalue.
pub fn min_eigenvalue(h: &HermitianOperator) -> Result<f64> {
    Ok(eigh(h)?.values.first().copied().unwrap_or(0.0))
}

/// Re tr(AB) for Hermitian A and B.
pub fn trace_product(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(LinalgError::Shape(format!(
            "trace product of dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.dim();
    let am = &a.matrix.data;
    let bm = &b.matrix.data;
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += am[i * n + k] * bm[k * n + i];
        }
    }
    let tol = 1e-10 * (1.0 + acc.re.abs());
    if acc.im.abs() > tol {
        return Err(LinalgError::Numerical(format!(
            "trace of Hermitian product has imaginary part {:e}",
            acc.im
        )));
    }
    Ok(acc.re)
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() > MAX_DIM {
            return Err(LinalgError::SizeLimit(amplitudes.len()));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(LinalgError::NotNormalized(norm));
        }
        Ok(PureState { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let dim = self.dim() * other.dim();
        if dim > MAX_DIM {
            return Err(LinalgError::SizeLimit(dim));
        }
        Ok(PureState { amplitudes: kron_vec(&self.amplitudes, &other.amplitudes) })
    }

    pub fn density(&self) -> HermitianOperator {
        HermitianOperator::projector(&self.amplitudes)
    }
}
