//! Truncated two-mode Fock space.
//!
//! A [`TwoModeState`] is a dense density matrix over `|n_A⟩ ⊗ |n_B⟩` with
//! row-major index `n_A · dim_b + n_B`. Everything downstream (catalog
//! states, channels, witnesses, teleportation) consumes this one type.

mod io;
mod phase_space;
mod transform;

pub use io::{read_state, write_state};
pub use phase_space::{
    characteristic, characteristic_function, displacement_diagonal, displacement_matrix, Axis,
    CharSlice, PhaseSpaceGrid,
};
pub use transform::{beam_splitter_pure, BeamSplitterOutput, Mode, ModeTransform};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::convention::TAIL_TOLERANCE;
use crate::error::{Error, Result};

pub(crate) const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Density matrix of a two-mode field on a truncated Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    dim_a: usize,
    dim_b: usize,
    matrix: DMatrix<Complex64>,
}

/// First and second moments of `(X_A, P_A, X_B, P_B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance {
    pub mean: [f64; 4],
    /// Symmetrized central second moments.
    pub matrix: [[f64; 4]; 4],
}

impl TwoModeState {
    /// Wraps a density matrix. Checks shape and Hermiticity only; see
    /// [`TwoModeState::validate`] for the full invariant check.
    pub fn from_matrix(dim_a: usize, dim_b: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = dim_a * dim_b;
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::InvalidParameter("cutoffs must be positive".into()));
        }
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n}x{n} matrix for dims ({dim_a}, {dim_b}), got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let state = TwoModeState {
            dim_a,
            dim_b,
            matrix,
        };
        let herm = state.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "matrix is not Hermitian (max |ρ − ρ†| = {herm:.3e})"
            )));
        }
        Ok(state)
    }

    /// Pure state `|ψ⟩⟨ψ|` from a row-major amplitude vector.
    pub fn from_pure(dim_a: usize, dim_b: usize, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != dim_a * dim_b {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for dims ({dim_a}, {dim_b})",
                amplitudes.len()
            )));
        }
        let v = DVector::from_column_slice(amplitudes);
        let matrix = &v * v.adjoint();
        Ok(TwoModeState {
            dim_a,
            dim_b,
            matrix,
        })
    }

    /// `|0,0⟩⟨0,0|` with the given cutoffs.
    pub fn vacuum(dim_a: usize, dim_b: usize) -> Self {
        let mut matrix = DMatrix::zeros(dim_a * dim_b, dim_a * dim_b);
        matrix[(0, 0)] = Complex64::new(1.0, 0.0);
        TwoModeState {
            dim_a,
            dim_b,
            matrix,
        }
    }

    /// `ρ_A ⊗ ρ_B` from single-mode density matrices.
    pub fn product(rho_a: &DMatrix<Complex64>, rho_b: &DMatrix<Complex64>) -> Result<Self> {
        if !rho_a.is_square() || !rho_b.is_square() {
            return Err(Error::DimensionMismatch("single-mode matrices must be square".into()));
        }
        let matrix = rho_a.kronecker(rho_b);
        TwoModeState::from_matrix(rho_a.nrows(), rho_b.nrows(), matrix)
    }

    /// Pure state with the given `(n_A, n_B, amplitude)` entries.
    ///
    /// Cutoffs are one above the largest index so that the top level is empty.
    pub fn fock_superposition(coeffs: &[(usize, usize, Complex64)]) -> Result<Self> {
        let da = coeffs.iter().map(|c| c.0).max().unwrap_or(0) + 2;
        let db = coeffs.iter().map(|c| c.1).max().unwrap_or(0) + 2;
        Self::fock_superposition_with_dims(coeffs, da, db)
    }

    pub fn fock_superposition_with_dims(
        coeffs: &[(usize, usize, Complex64)],
        dim_a: usize,
        dim_b: usize,
    ) -> Result<Self> {
        let mut amps = vec![C0; dim_a * dim_b];
        for &(na, nb, c) in coeffs {
            if na >= dim_a {
                return Err(Error::IndexOutOfRange {
                    mode: 'A',
                    index: na,
                    cutoff: dim_a,
                });
            }
            if nb >= dim_b {
                return Err(Error::IndexOutOfRange {
                    mode: 'B',
                    index: nb,
                    cutoff: dim_b,
                });
            }
            amps[na * dim_b + nb] += c;
        }
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm_sq });
        }
        Self::from_pure(dim_a, dim_b, &amps)
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    #[inline]
    pub fn index(&self, na: usize, nb: usize) -> usize {
        na * self.dim_b + nb
    }

    /// Matrix element `⟨a1, b1|ρ|a2, b2⟩`.
    pub fn element(&self, a1: usize, b1: usize, a2: usize, b2: usize) -> Complex64 {
        self.matrix[(self.index(a1, b1), self.index(a2, b2))]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ.
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Rescale to unit trace.
    pub fn normalized(mut self) -> Result<Self> {
        let t = self.trace();
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("cannot normalize trace {t}")));
        }
        self.matrix /= Complex64::new(t, 0.0);
        Ok(self)
    }

    /// Photon-number populations of mode A and mode B.
    pub fn populations(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pa = vec![0.0; self.dim_a];
        let mut pb = vec![0.0; self.dim_b];
        for a in 0..self.dim_a {
            for b in 0..self.dim_b {
                let p = self.matrix[(self.index(a, b), self.index(a, b))].re;
                pa[a] += p;
                pb[b] += p;
            }
        }
        (pa, pb)
    }

    pub fn mean_photon_numbers(&self) -> (f64, f64) {
        let (pa, pb) = self.populations();
        let na = pa.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let nb = pb.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        (na, nb)
    }

    /// Larger of the two top-level populations.
    pub fn tail_population(&self) -> f64 {
        let (pa, pb) = self.populations();
        pa[self.dim_a - 1].max(pb[self.dim_b - 1])
    }

    /// Whether the truncation tail is below [`TAIL_TOLERANCE`].
    pub fn is_converged(&self) -> bool {
        self.tail_population() <= TAIL_TOLERANCE
    }

    /// Error unless the truncation tail is acceptable.
    pub fn require_converged(&self) -> Result<()> {
        let tail = self.tail_population();
        if tail > TAIL_TOLERANCE {
            return Err(Error::NotConverged {
                tail,
                suggested_cutoff: self.dim_a.max(self.dim_b) + 8,
            });
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Full invariant check: Hermitian, unit trace, positive semidefinite,
    /// converged truncation.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::InvalidParameter(format!("not Hermitian: {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-10 {
            return Err(Error::InvalidParameter(format!(
                "not positive semidefinite: smallest eigenvalue {min:.3e}"
            )));
        }
        self.require_converged()
    }

    /// Reduced density matrix of mode A.
    pub fn reduced_a(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim_a, self.dim_a);
        for i in 0..self.dim_a {
            for j in 0..self.dim_a {
                let mut s = C0;
                for b in 0..self.dim_b {
                    s += self.matrix[(self.index(i, b), self.index(j, b))];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Reduced density matrix of mode B.
    pub fn reduced_b(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim_b, self.dim_b);
        for i in 0..self.dim_b {
            for j in 0..self.dim_b {
                let mut s = C0;
                for a in 0..self.dim_a {
                    s += self.matrix[(self.index(a, i), self.index(a, j))];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Drops empty top levels so that at most `tol` population is discarded
    /// per mode, keeping at least one level beyond the retained support.
    pub fn trimmed(&self, tol: f64) -> TwoModeState {
        let (pa, pb) = self.populations();
        let keep = |p: &[f64]| {
            let mut dropped = 0.0;
            let mut d = p.len();
            while d > 2 && dropped + p[d - 1] + p[d - 2] <= tol {
                dropped += p[d - 1];
                d -= 1;
            }
            d
        };
        let (da, db) = (keep(&pa), keep(&pb));
        if (da, db) == (self.dim_a, self.dim_b) {
            return self.clone();
        }
        let m = DMatrix::from_fn(da * db, da * db, |r, c| {
            self.element(r / db, r % db, c / db, c % db)
        });
        TwoModeState {
            dim_a: da,
            dim_b: db,
            matrix: m,
        }
    }

    /// Copy into larger (or equal) cutoffs, zero-padding new levels.
    pub fn embed(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a < self.dim_a || dim_b < self.dim_b {
            return Err(Error::DimensionMismatch("embed can only enlarge cutoffs".into()));
        }
        let mut m = DMatrix::zeros(dim_a * dim_b, dim_a * dim_b);
        for a1 in 0..self.dim_a {
            for b1 in 0..self.dim_b {
                let r = a1 * dim_b + b1;
                for a2 in 0..self.dim_a {
                    for b2 in 0..self.dim_b {
                        m[(r, a2 * dim_b + b2)] = self.element(a1, b1, a2, b2);
                    }
                }
            }
        }
        Ok(TwoModeState {
            dim_a,
            dim_b,
            matrix: m,
        })
    }

    /// `Tr[ρ (A ⊗ B)]` for single-mode operators given in the Fock basis of
    /// each mode. Operators may be smaller than the cutoffs (missing levels
    /// count as zero) but not larger.
    pub fn expect_local(&self, op_a: &DMatrix<Complex64>, op_b: &DMatrix<Complex64>) -> Complex64 {
        let da = op_a.nrows().min(self.dim_a);
        let db = op_b.nrows().min(self.dim_b);
        let mut acc = C0;
        for a1 in 0..da {
            for a2 in 0..da {
                let oa = op_a[(a2, a1)];
                if oa == C0 {
                    continue;
                }
                let mut inner = C0;
                for b1 in 0..db {
                    let row = self.index(a1, b1);
                    for b2 in 0..db {
                        let ob = op_b[(b2, b1)];
                        if ob != C0 {
                            inner += self.matrix[(row, self.index(a2, b2))] * ob;
                        }
                    }
                }
                acc += oa * inner;
            }
        }
        acc
    }

    /// Same as [`expect_local`](Self::expect_local) for real symmetric-pattern
    /// operators: `Σ ρ[(a1,b1),(a2,b2)] A[a2,a1] B[b2,b1]` with real entries.
    pub fn expect_local_real(&self, op_a: &DMatrix<f64>, op_b: &DMatrix<f64>) -> f64 {
        let da = op_a.nrows().min(self.dim_a);
        let db = op_b.nrows().min(self.dim_b);
        let mut acc = 0.0;
        for a1 in 0..da {
            for a2 in 0..da {
                let oa = op_a[(a2, a1)];
                if oa == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for b1 in 0..db {
                    let row = self.index(a1, b1);
                    for b2 in 0..db {
                        let ob = op_b[(b2, b1)];
                        if ob != 0.0 {
                            inner += self.matrix[(row, self.index(a2, b2))].re * ob;
                        }
                    }
                }
                acc += oa * inner;
            }
        }
        acc
    }

    /// Expectation of the normal-ordered monomial `a†^p a^q ⊗ b†^r b^s`.
    pub fn expect_ladder(&self, p: usize, q: usize, r: usize, s: usize) -> Complex64 {
        let mut acc = C0;
        for a_in in q..self.dim_a {
            let a_out = a_in - q + p;
            if a_out >= self.dim_a {
                continue;
            }
            let ca = ladder_coefficient(p, q, a_in);
            for b_in in s..self.dim_b {
                let b_out = b_in - s + r;
                if b_out >= self.dim_b {
                    continue;
                }
                let cb = ladder_coefficient(r, s, b_in);
                // Tr[ρ Op] = Σ ⟨in|ρ|out⟩ ⟨out|Op|in⟩
                acc += self.element(a_in, b_in, a_out, b_out) * (ca * cb);
            }
        }
        acc
    }

    /// Moments of `(X_A, P_A, X_B, P_B)` with `X = (a + a†)/2`.
    pub fn covariance(&self) -> Covariance {
        let a = self.expect_ladder(0, 1, 0, 0);
        let b = self.expect_ladder(0, 0, 0, 1);
        let aa = self.expect_ladder(0, 2, 0, 0);
        let bb = self.expect_ladder(0, 0, 0, 2);
        let na = self.expect_ladder(1, 1, 0, 0).re;
        let nb = self.expect_ladder(0, 0, 1, 1).re;
        let ab = self.expect_ladder(0, 1, 0, 1);
        let a_bdag = self.expect_ladder(0, 1, 1, 0);

        let mean = [a.re, a.im, b.re, b.im];
        let mut raw = [[0.0; 4]; 4];
        raw[0][0] = (2.0 * aa.re + 2.0 * na + 1.0) / 4.0;
        raw[1][1] = (-2.0 * aa.re + 2.0 * na + 1.0) / 4.0;
        raw[0][1] = aa.im / 2.0;
        raw[2][2] = (2.0 * bb.re + 2.0 * nb + 1.0) / 4.0;
        raw[3][3] = (-2.0 * bb.re + 2.0 * nb + 1.0) / 4.0;
        raw[2][3] = bb.im / 2.0;
        raw[0][2] = (ab.re + a_bdag.re) / 2.0;
        raw[0][3] = (ab.im - a_bdag.im) / 2.0;
        raw[1][2] = (ab.im + a_bdag.im) / 2.0;
        raw[1][3] = (a_bdag.re - ab.re) / 2.0;
        let mut matrix = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in i..4 {
                let v = raw[i][j] - mean[i] * mean[j];
                matrix[i][j] = v;
                matrix[j][i] = v;
            }
        }
        Covariance { mean, matrix }
    }
}

/// `⟨n − q + p| a†^p a^q |n⟩`.
fn ladder_coefficient(p: usize, q: usize, n: usize) -> f64 {
    let mut c = 1.0;
    for k in 0..q {
        c *= ((n - k) as f64).sqrt();
    }
    let m = n - q;
    for k in 1..=p {
        c *= ((m + k) as f64).sqrt();
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_state_superposition() {
        let s = TwoModeState::fock_superposition(&[(0, 0, c(1.0))]).unwrap();
        assert_eq!(s.element(0, 0, 0, 0), c(1.0));
        assert!((s.trace() - 1.0).abs() < 1e-15);
        s.validate().unwrap();
    }

    #[test]
    fn bell_like_coherence() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = TwoModeState::fock_superposition(&[(0, 0, c(h)), (1, 1, c(h))]).unwrap();
        assert!((s.element(1, 1, 0, 0) - c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn photon_means_of_psi_b() {
        let s = TwoModeState::fock_superposition(&[(0, 0, c(0.6)), (1, 1, c(0.8))]).unwrap();
        let (na, nb) = s.mean_photon_numbers();
        assert!((na - 0.64).abs() < 1e-14 && (nb - 0.64).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let e = TwoModeState::fock_superposition(&[(0, 0, c(0.6)), (1, 1, c(0.6))]).unwrap_err();
        assert!(matches!(e, Error::NotNormalized { .. }));
        let e = TwoModeState::fock_superposition_with_dims(&[(3, 0, c(1.0))], 3, 3).unwrap_err();
        assert!(matches!(e, Error::IndexOutOfRange { mode: 'A', .. }));
    }

    #[test]
    fn vacuum_covariance_is_quarter_identity() {
        let cov = TwoModeState::vacuum(4, 4).covariance();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert!((cov.matrix[i][j] - want).abs() < 1e-15);
            }
            assert_eq!(cov.mean[i], 0.0);
        }
    }

    #[test]
    fn partial_traces_of_product() {
        let mut ra = DMatrix::zeros(3, 3);
        ra[(0, 0)] = c(0.7);
        ra[(1, 1)] = c(0.3);
        let mut rb = DMatrix::zeros(2, 2);
        rb[(0, 0)] = c(0.5);
        rb[(1, 1)] = c(0.5);
        let s = TwoModeState::product(&ra, &rb).unwrap();
        assert!((s.reduced_a() - &ra).norm() < 1e-15);
        assert!((s.reduced_b() - &rb).norm() < 1e-15);
    }
}
