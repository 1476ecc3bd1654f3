//! Passive and displacement transforms of a two-mode state.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::phase_space::displacement_matrix;
use super::{TwoModeState, C0};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

/// Single-step mode transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeTransform {
    /// `a → a e^{iφ}` on the target mode, i.e. `X' = cos φ X − sin φ P`.
    PhaseShift { mode: Mode, phi: f64 },
    /// 50:50 splitter with outputs `a₁ = (a_A − a_B)/√2` (stored as mode A)
    /// and `a₂ = (a_A + a_B)/√2` (stored as mode B).
    BeamSplitter5050,
    /// `D(λ) = exp(λ a† − λ* a)` on the target mode.
    Displacement { mode: Mode, lambda: Complex64 },
}

/// Beam-splitter output along with the weight pushed beyond the cutoffs.
#[derive(Debug, Clone)]
pub struct BeamSplitterOutput {
    pub state: TwoModeState,
    pub lost_trace: f64,
}

impl TwoModeState {
    pub fn apply_transform(&self, t: ModeTransform) -> Result<TwoModeState> {
        match t {
            ModeTransform::PhaseShift { mode, phi } => Ok(match mode {
                Mode::A => self.rotate(phi, 0.0),
                Mode::B => self.rotate(0.0, phi),
            }),
            ModeTransform::BeamSplitter5050 => Ok(self.beam_splitter(1e-10)?.state),
            ModeTransform::Displacement { mode, lambda } => {
                let d = match mode {
                    Mode::A => displacement_matrix(lambda, self.dim_a),
                    Mode::B => displacement_matrix(lambda, self.dim_b),
                };
                Ok(self.apply_local(mode, &d))
            }
        }
    }

    /// Local phase rotations `e^{iφ_A n_A} ⊗ e^{iφ_B n_B}`.
    pub fn rotate(&self, phi_a: f64, phi_b: f64) -> TwoModeState {
        if phi_a == 0.0 && phi_b == 0.0 {
            return self.clone();
        }
        let n = self.matrix.nrows();
        let phase: Vec<Complex64> = (0..n)
            .map(|i| {
                let a = (i / self.dim_b) as f64;
                let b = (i % self.dim_b) as f64;
                Complex64::from_polar(1.0, phi_a * a + phi_b * b)
            })
            .collect();
        let mut m = self.matrix.clone();
        for j in 0..n {
            let pj = phase[j].conj();
            for i in 0..n {
                m[(i, j)] *= phase[i] * pj;
            }
        }
        TwoModeState {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            matrix: m,
        }
    }

    /// `(O ⊗ 1) ρ (O ⊗ 1)†` or `(1 ⊗ O) ρ (1 ⊗ O)†` for a single-mode operator.
    pub fn apply_local(&self, mode: Mode, op: &DMatrix<Complex64>) -> TwoModeState {
        let (da, db) = (self.dim_a, self.dim_b);
        let n = da * db;
        let mut left = DMatrix::from_element(n, n, C0);
        match mode {
            Mode::A => {
                // left[(i,b),col] = Σ_j O[i,j] ρ[(j,b),col]
                for i in 0..da {
                    for j in 0..da {
                        let o = op[(i, j)];
                        if o == C0 {
                            continue;
                        }
                        for b in 0..db {
                            let (r_out, r_in) = (i * db + b, j * db + b);
                            for col in 0..n {
                                left[(r_out, col)] += o * self.matrix[(r_in, col)];
                            }
                        }
                    }
                }
                let mut out = DMatrix::from_element(n, n, C0);
                for i in 0..da {
                    for j in 0..da {
                        let o = op[(i, j)].conj();
                        if o == C0 {
                            continue;
                        }
                        for b in 0..db {
                            let (c_out, c_in) = (i * db + b, j * db + b);
                            for row in 0..n {
                                out[(row, c_out)] += left[(row, c_in)] * o;
                            }
                        }
                    }
                }
                TwoModeState {
                    dim_a: da,
                    dim_b: db,
                    matrix: out,
                }
            }
            Mode::B => {
                for a in 0..da {
                    for i in 0..db {
                        for j in 0..db {
                            let o = op[(i, j)];
                            if o == C0 {
                                continue;
                            }
                            let (r_out, r_in) = (a * db + i, a * db + j);
                            for col in 0..n {
                                left[(r_out, col)] += o * self.matrix[(r_in, col)];
                            }
                        }
                    }
                }
                let mut out = DMatrix::from_element(n, n, C0);
                for a in 0..da {
                    for i in 0..db {
                        for j in 0..db {
                            let o = op[(i, j)].conj();
                            if o == C0 {
                                continue;
                            }
                            let (c_out, c_in) = (a * db + i, a * db + j);
                            for row in 0..n {
                                out[(row, c_out)] += left[(row, c_in)] * o;
                            }
                        }
                    }
                }
                TwoModeState {
                    dim_a: da,
                    dim_b: db,
                    matrix: out,
                }
            }
        }
    }

    /// 50:50 beam splitter. Output cutoffs grow from `max(dim_a, dim_b)`
    /// until the weight beyond them is below `max_lost_trace` (or the exact
    /// bound `dim_a + dim_b − 1` is reached).
    pub fn beam_splitter(&self, max_lost_trace: f64) -> Result<BeamSplitterOutput> {
        let exact = self.dim_a + self.dim_b - 1;
        let mut d_out = self.dim_a.max(self.dim_b);
        let input_trace = self.trace();
        loop {
            let state = self.beam_splitter_with_dims(d_out, d_out);
            let lost_trace = (input_trace - state.trace()).max(0.0);
            if lost_trace <= max_lost_trace || d_out >= exact {
                return Ok(BeamSplitterOutput { state, lost_trace });
            }
            d_out = (d_out + 4).min(exact);
        }
    }

    /// 50:50 beam splitter into explicit output cutoffs.
    pub fn beam_splitter_with_dims(&self, d1: usize, d2: usize) -> TwoModeState {
        let (da, db) = (self.dim_a, self.dim_b);
        let n_max = da + db - 2;
        let blocks = splitter_blocks(n_max);

        // Input indices per block N: j = n_A with n_B = N − j.
        let in_range = |n: usize| {
            let lo = n.saturating_sub(db - 1);
            let hi = n.min(da - 1);
            lo..=hi
        };
        let out_range = |n: usize| {
            let lo = n.saturating_sub(d2 - 1);
            let hi = n.min(d1 - 1);
            lo..=hi
        };

        // Restricted block unitaries (rows: output m₁, cols: input n_A).
        let mut restricted: Vec<Option<(Vec<usize>, Vec<usize>, DMatrix<f64>)>> =
            Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            let ins: Vec<usize> = in_range(n).collect();
            let outs: Vec<usize> = out_range(n).collect();
            if ins.is_empty() || outs.is_empty() || outs.first() > outs.last() {
                restricted.push(None);
                continue;
            }
            let u = &blocks[n];
            let m = DMatrix::from_fn(outs.len(), ins.len(), |r, c| u[(outs[r], ins[c])]);
            restricted.push(Some((ins, outs, m)));
        }

        let dim_out = d1 * d2;
        let mut out = DMatrix::from_element(dim_out, dim_out, C0);
        for n1 in 0..=n_max {
            let Some((ins1, outs1, u1)) = &restricted[n1] else {
                continue;
            };
            for n2 in 0..=n_max {
                let Some((ins2, outs2, u2)) = &restricted[n2] else {
                    continue;
                };
                let block = DMatrix::from_fn(ins1.len(), ins2.len(), |r, c| {
                    let (j1, j2) = (ins1[r], ins2[c]);
                    self.matrix[(j1 * db + (n1 - j1), j2 * db + (n2 - j2))]
                });
                if block.iter().all(|z| *z == C0) {
                    continue;
                }
                let u1c = u1.map(|x| Complex64::new(x, 0.0));
                let u2c = u2.map(|x| Complex64::new(x, 0.0));
                let res = &u1c * block * u2c.transpose();
                for (r, &m1) in outs1.iter().enumerate() {
                    let row = m1 * d2 + (n1 - m1);
                    for (c, &m2) in outs2.iter().enumerate() {
                        out[(row, m2 * d2 + (n2 - m2))] = res[(r, c)];
                    }
                }
            }
        }
        TwoModeState {
            dim_a: d1,
            dim_b: d2,
            matrix: out,
        }
    }
}

/// 50:50 beam splitter on a pure amplitude matrix `ψ(n_A, n_B)`, into the
/// exact output cutoffs `dim_a + dim_b − 1`.
pub fn beam_splitter_pure(psi: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (da, db) = psi.shape();
    let d = da + db - 1;
    let blocks = splitter_blocks(d - 1);
    let mut out = DMatrix::from_element(d, d, C0);
    for (n, u) in blocks.iter().enumerate() {
        let lo = n.saturating_sub(db - 1);
        for j in lo..=n.min(da - 1) {
            let amp = psi[(j, n - j)];
            if amp == C0 {
                continue;
            }
            for m1 in 0..=n {
                out[(m1, n - m1)] += amp * u[(m1, j)];
            }
        }
    }
    out
}

/// Full block unitaries `U_N[m, j] = ⟨m, N−m|_{12} |j, N−j⟩_{AB}` for
/// `N = 0..=n_max`. Real-valued in this convention.
///
/// Built by the stable recurrence `|j,k⟩ = a_A†|j−1,k⟩/√j` with
/// `a_A† = (b₁† + b₂†)/√2` and `a_B† = (b₂† − b₁†)/√2`.
pub(crate) fn splitter_blocks(n_max: usize) -> Vec<DMatrix<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(n_max + 1);
    blocks.push(DMatrix::from_element(1, 1, 1.0));
    for n in 1..=n_max {
        let prev = &blocks[n - 1];
        let mut cur = DMatrix::zeros(n + 1, n + 1);
        for j in 0..=n {
            let k = n - j;
            if j >= 1 {
                // from |j−1, k⟩ (column j−1 of prev), apply (b1† + b2†)/√(2j)
                let scale = s / (j as f64).sqrt();
                for m in 0..n {
                    let amp = prev[(m, j - 1)];
                    if amp == 0.0 {
                        continue;
                    }
                    let rest = n - 1 - m;
                    cur[(m + 1, j)] += scale * amp * ((m + 1) as f64).sqrt();
                    cur[(m, j)] += scale * amp * ((rest + 1) as f64).sqrt();
                }
            } else {
                // j = 0: from |0, k−1⟩ apply (b2† − b1†)/√(2k)
                let scale = s / (k as f64).sqrt();
                for m in 0..n {
                    let amp = prev[(m, 0)];
                    if amp == 0.0 {
                        continue;
                    }
                    let rest = n - 1 - m;
                    cur[(m + 1, 0)] -= scale * amp * ((m + 1) as f64).sqrt();
                    cur[(m, 0)] += scale * amp * ((rest + 1) as f64).sqrt();
                }
            }
        }
        blocks.push(cur);
    }
    blocks
}

impl ModeTransform {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModeTransform::PhaseShift { phi, .. } if !phi.is_finite() => {
                Err(Error::InvalidParameter("phase must be finite".into()))
            }
            ModeTransform::Displacement { lambda, .. } if !lambda.norm().is_finite() => {
                Err(Error::InvalidParameter("displacement must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn blocks_are_orthogonal() {
        for u in splitter_blocks(30) {
            let id = &u.transpose() * &u;
            let err = (id - DMatrix::identity(u.nrows(), u.ncols())).abs().max();
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn phase_zero_is_identity() {
        let s = TwoModeState::fock_superposition(&[(0, 0, c(0.6)), (1, 1, c(0.8))]).unwrap();
        let r = s
            .apply_transform(ModeTransform::PhaseShift { mode: Mode::A, phi: 0.0 })
            .unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn single_photon_splits_evenly() {
        // |1,0⟩ → (|1,0⟩ + |0,1⟩)/√2 with a₁ = (a_A − a_B)/√2, a₂ = (a_A + a_B)/√2.
        let s = TwoModeState::fock_superposition_with_dims(&[(1, 0, c(1.0))], 3, 3).unwrap();
        let out = s.apply_transform(ModeTransform::BeamSplitter5050).unwrap();
        assert!((out.element(1, 0, 1, 0).re - 0.5).abs() < 1e-14);
        assert!((out.element(0, 1, 0, 1).re - 0.5).abs() < 1e-14);
        assert!((out.element(1, 0, 0, 1).re - 0.5).abs() < 1e-14);
        // |0,1⟩ → (−|1,0⟩ + |0,1⟩)/√2
        let s = TwoModeState::fock_superposition_with_dims(&[(0, 1, c(1.0))], 3, 3).unwrap();
        let out = s.apply_transform(ModeTransform::BeamSplitter5050).unwrap();
        assert!((out.element(1, 0, 0, 1).re + 0.5).abs() < 1e-14);
    }

    #[test]
    fn splitter_maps_quadratures() {
        // ⟨X₁⟩ = (⟨X_A⟩ − ⟨X_B⟩)/√2 and ⟨P₂⟩ = (⟨P_A⟩ + ⟨P_B⟩)/√2 for a displaced state.
        let s = TwoModeState::vacuum(14, 14)
            .apply_transform(ModeTransform::Displacement {
                mode: Mode::A,
                lambda: Complex64::new(0.4, 0.3),
            })
            .unwrap()
            .apply_transform(ModeTransform::Displacement {
                mode: Mode::B,
                lambda: Complex64::new(-0.2, 0.5),
            })
            .unwrap();
        let before = s.covariance().mean;
        let out = s.beam_splitter(1e-12).unwrap();
        let after = out.state.covariance().mean;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((after[0] - r * (before[0] - before[2])).abs() < 1e-9);
        assert!((after[3] - r * (before[1] + before[3])).abs() < 1e-9);
        assert!(out.lost_trace < 1e-10);
    }

    #[test]
    fn displaced_vacuum_is_coherent() {
        let lam = Complex64::new(0.7, -0.2);
        let s = TwoModeState::vacuum(20, 2)
            .apply_transform(ModeTransform::Displacement { mode: Mode::A, lambda: lam })
            .unwrap();
        let a = s.expect_ladder(0, 1, 0, 0);
        assert!((a - lam).norm() < 1e-12);
        assert!((s.purity() - 1.0).abs() < 1e-10);
    }
}
