//! Dense complex-matrix algebra for small Hilbert spaces.
//!
//! Everything here operates on matrices of dimension at most 4 (one or two
//! qubits), stored dense and row-major in 64-bit floats. The Hermitian
//! eigensolver is a cyclic Jacobi iteration, which at these sizes is simple
//! and converges to machine precision in a handful of sweeps.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar carried by every matrix entry (ħ = 1 units).
pub type ComplexScalar = Complex64;

/// Largest supported Hilbert-space dimension (two qubits).
pub const MAX_DIM: usize = 4;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted descending; `eigenvectors` holds the matching
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    /// Build from row-major complex entries.
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        Ok(Self { dim, entries })
    }

    /// Build from row-major (re, im) pairs; handy in tests.
    pub fn from_parts(dim: usize, parts: &[(f64, f64)]) -> Result<Self> {
        let entries = parts.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        Self::from_entries(dim, entries)
    }

    /// Diagonal matrix with real entries.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, Complex64::new(v, 0.0));
        }
        m
    }

    /// Pauli σ_x.
    pub fn pauli_x() -> Self {
        Self::from_parts(2, &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]).unwrap()
    }

    /// Pauli σ_y.
    pub fn pauli_y() -> Self {
        Self::from_parts(2, &[(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)]).unwrap()
    }

    /// Pauli σ_z (|0⟩ = (1,0) is the +1 eigenstate).
    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = value;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect();
        Ok(Self { dim: self.dim, entries })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect();
        Ok(Self { dim: self.dim, entries })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let entries = self.entries.iter().map(|a| a * factor).collect();
        Self { dim: self.dim, entries }
    }

    pub fn neg(&self) -> Self {
        let entries = self.entries.iter().map(|a| -a).collect();
        Self { dim: self.dim, entries }
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    /// Conjugate transpose A†.
    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Entrywise complex conjugate A*.
    pub fn conjugate(&self) -> Self {
        let entries = self.entries.iter().map(|c| c.conj()).collect();
        Self { dim: self.dim, entries }
    }

    pub fn trace(&self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            acc += self.get(i, i);
        }
        acc
    }

    /// Relative Hermiticity residual ‖A − A†‖_F / max(1, ‖A‖_F).
    pub fn hermiticity_residual(&self) -> f64 {
        let diff = self.sub(&self.adjoint()).expect("same dim");
        diff.frobenius_norm() / f64::max(1.0, self.frobenius_norm())
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_residual() <= rel_tol
    }
}

impl std::fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let c = self.get(i, j);
                write!(f, "{:+.6}{:+.6}i ", c.re, c.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// AB − BA.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let ab = a.matmul(b)?;
    let ba = b.matmul(a)?;
    ab.sub(&ba)
}

/// √(tr(A†A)) = √(Σ |a_ij|²).
pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.entries().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

impl ComplexMatrix {
    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }
}

/// Kronecker product; the result dimension must stay within `MAX_DIM`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (da, db) = (a.dim(), b.dim());
    let d = da * db;
    if d > MAX_DIM {
        return Err(Error::DimensionMismatch { expected: MAX_DIM, got: d });
    }
    let mut out = ComplexMatrix::zeros(d);
    for i in 0..da {
        for j in 0..da {
            let aij = a.get(i, j);
            for k in 0..db {
                for l in 0..db {
                    out.set(i * db + k, j * db + l, aij * b.get(k, l));
                }
            }
        }
    }
    Ok(out)
}

const HERMITICITY_TOL: f64 = 1e-10;
const JACOBI_OFF_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let d = a.dim();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc += a.get(i, j).norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Iterates plane rotations over all off-diagonal pairs until the
/// off-diagonal Frobenius mass drops below 1e-14 (relative to the matrix
/// scale) or 100 sweeps elapse.
pub fn hermitian_eigendecompose(a: &ComplexMatrix) -> Result<Spectrum> {
    let residual = a.hermiticity_residual();
    if residual > HERMITICITY_TOL {
        return Err(Error::NotHermitian { residual });
    }
    let d = a.dim();
    let scale = f64::max(1.0, a.frobenius_norm());
    // Work on the Hermitian average so round-off in the input cannot bias
    // the rotations.
    let mut m = a.add(&a.adjoint()).expect("same dim").scale(Complex64::new(0.5, 0.0));
    let mut v = ComplexMatrix::identity(d);

    let mut converged = off_diagonal_norm(&m) <= JACOBI_OFF_TOL * scale;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..d {
            for q in (p + 1)..d {
                let g = m.get(p, q);
                let r = g.norm();
                if r == 0.0 {
                    continue;
                }
                let phase = g / r; // e^{iφ}
                let alpha = m.get(p, p).re;
                let beta = m.get(q, q).re;
                let tau = (beta - alpha) / (2.0 * r);
                // Smaller-magnitude root of t² − 2τt − 1 = 0.
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Column rotation: columns p, q of both M and V.
                for i in 0..d {
                    let mip = m.get(i, p);
                    let miq = m.get(i, q);
                    m.set(i, p, c * mip + s * phase.conj() * miq);
                    m.set(i, q, -s * phase * mip + c * miq);
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip + s * phase.conj() * viq);
                    v.set(i, q, -s * phase * vip + c * viq);
                }
                // Row rotation: rows p, q of M.
                for j in 0..d {
                    let mpj = m.get(p, j);
                    let mqj = m.get(q, j);
                    m.set(p, j, c * mpj + s * phase * mqj);
                    m.set(q, j, -s * phase.conj() * mpj + c * mqj);
                }
                // Re-symmetrize the rotated pair against round-off.
                m.set(p, q, Complex64::new(0.0, 0.0));
                m.set(q, p, Complex64::new(0.0, 0.0));
                let mpp = m.get(p, p).re;
                let mqq = m.get(q, q).re;
                m.set(p, p, Complex64::new(mpp, 0.0));
                m.set(q, q, Complex64::new(mqq, 0.0));
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&m) <= JACOBI_OFF_TOL * scale;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps, residual: off_diagonal_norm(&m) });
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m.get(j, j).re.partial_cmp(&m.get(i, i).re).expect("finite"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m.get(i, i).re).collect();
    let mut eigenvectors = ComplexMatrix::zeros(d);
    for (newcol, &oldcol) in order.iter().enumerate() {
        for i in 0..d {
            eigenvectors.set(i, newcol, v.get(i, oldcol));
        }
    }
    Ok(Spectrum { eigenvalues, eigenvectors })
}

const SQRT_EIGENVALUE_FLOOR: f64 = -1e-10;

/// Hermitian square root via the spectral decomposition.
///
/// Eigenvalues in [−1e-10, 0) are treated as round-off and clamped to zero;
/// anything below that floor is rejected as genuinely non-PSD.
pub fn hermitian_sqrt(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let spectrum = hermitian_eigendecompose(a)?;
    let d = a.dim();
    let mut roots = Vec::with_capacity(d);
    for &lambda in &spectrum.eigenvalues {
        if lambda < SQRT_EIGENVALUE_FLOOR {
            return Err(Error::NegativeEigenvalue { value: lambda });
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    let v = &spectrum.eigenvectors;
    let mut out = ComplexMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &root) in roots.iter().enumerate() {
                acc += v.get(i, k) * root * v.get(j, k).conj();
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

impl Spectrum {
    /// Rebuild V·diag(λ)·V†; used by reconstruction checks.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = self.eigenvectors.dim();
        let v = &self.eigenvectors;
        let mut out = ComplexMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &lambda) in self.eigenvalues.iter().enumerate() {
                    acc += v.get(i, k) * lambda * v.get(j, k).conj();
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}
