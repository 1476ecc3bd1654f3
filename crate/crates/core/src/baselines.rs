//! Gaussian-moment reference criteria: Simon (partial-transpose symplectic
//! eigenvalue) and the Duan variance sum with gain.

use serde::{Deserialize, Serialize};

use crate::bounds::duan_bound;
use crate::convention::VACUUM_VARIANCE;
use crate::error::{Error, Result};
use crate::fock::TwoModeState;

/// Slack on the `ν̃₋ < 1/4` test so that boundary states are not flagged by rounding.
const SIMON_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub covariance: [[f64; 4]; 4],
    pub mean: [f64; 4],
    /// Smaller symplectic eigenvalue of the state itself.
    pub nu_minus: f64,
    /// Smaller symplectic eigenvalue after `P_B → −P_B`.
    pub nu_minus_pt: f64,
    pub entangled: bool,
}

fn det2(m: &[[f64; 4]; 4], r: usize, c: usize) -> f64 {
    m[r][c] * m[r + 1][c + 1] - m[r][c + 1] * m[r + 1][c]
}

fn det4(m: &[[f64; 4]; 4]) -> f64 {
    let a = nalgebra::Matrix4::from_fn(|i, j| m[i][j]);
    a.determinant()
}

/// `ν₋ = √((Δ − √(Δ² − 4 det σ))/2)` with `Δ = det A + det B ± 2 det C`.
fn smaller_symplectic(sigma: &[[f64; 4]; 4], transpose: bool) -> f64 {
    let (a, b, c) = (det2(sigma, 0, 0), det2(sigma, 2, 2), det2(sigma, 0, 2));
    let delta = a + b + if transpose { -2.0 * c } else { 2.0 * c };
    let disc = (delta * delta - 4.0 * det4(sigma)).max(0.0);
    ((delta - disc.sqrt()) / 2.0).max(0.0).sqrt()
}

pub fn simon_test(state: &TwoModeState) -> Result<CovarianceReport> {
    let cov = state.covariance();
    let nu_minus = smaller_symplectic(&cov.matrix, false);
    if nu_minus < VACUUM_VARIANCE - 1e-8 {
        return Err(Error::Unphysical(format!(
            "smallest symplectic eigenvalue {nu_minus} violates the uncertainty bound 1/4"
        )));
    }
    let nu_minus_pt = smaller_symplectic(&cov.matrix, true);
    Ok(CovarianceReport {
        covariance: cov.matrix,
        mean: cov.mean,
        nu_minus,
        nu_minus_pt,
        entangled: nu_minus_pt < VACUUM_VARIANCE - SIMON_TOLERANCE,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuanReport {
    /// `⟨Δ²û′⟩ + ⟨Δ²v̂′⟩`.
    pub e1_prime: f64,
    pub bound: f64,
    pub entangled: bool,
}

/// Variance sum of `û′ = |g|X_A − X_B/g`, `v̂′ = |g|P_A + P_B/g` after local
/// phase shifts `φ_A`, `φ_B`.
pub fn duan_test(state: &TwoModeState, g: f64, phi_a: f64, phi_b: f64) -> Result<DuanReport> {
    let bound = duan_bound(g)?;
    let s = state.rotate(phi_a, phi_b).covariance().matrix;
    let (ga, gb) = (g.abs(), 1.0 / g);
    let var_u = ga * ga * s[0][0] + gb * gb * s[2][2] - 2.0 * ga * gb * s[0][2];
    let var_v = ga * ga * s[1][1] + gb * gb * s[3][3] + 2.0 * ga * gb * s[1][3];
    let e1_prime = var_u + var_v;
    Ok(DuanReport {
        e1_prime,
        bound,
        entangled: e1_prime < bound - SIMON_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{make_dephased_cat, make_tmss, CatSpec, TmssOperation, TmssSpec};

    fn tmss(s: f64, operation: TmssOperation) -> TwoModeState {
        make_tmss(TmssSpec { s, operation }).unwrap()
    }

    #[test]
    fn vacuum_sits_on_the_boundary() {
        let r = simon_test(&TwoModeState::vacuum(2, 2)).unwrap();
        assert!((r.nu_minus_pt - 0.25).abs() < 1e-12);
        assert!(!r.entangled);
        let d = duan_test(&TwoModeState::vacuum(2, 2), 1.0, 0.0, 0.0).unwrap();
        assert!((d.e1_prime - 1.0).abs() < 1e-12 && !d.entangled);
    }

    #[test]
    fn tmss_eigenvalue() {
        let s = 0.5;
        let r = simon_test(&tmss(s, TmssOperation::None)).unwrap();
        assert!((r.nu_minus_pt - (-2.0 * s).exp() / 4.0).abs() < 1e-7);
        assert!(r.entangled);
        let d = duan_test(&tmss(s, TmssOperation::None), 1.0, 0.0, 0.0).unwrap();
        assert!((d.e1_prime - (-1.0f64).exp()).abs() < 1e-7 && d.entangled);
    }

    #[test]
    fn photon_added_tmss_below_threshold_is_missed() {
        let r = simon_test(&tmss(0.3, TmssOperation::AddBoth)).unwrap();
        assert!(!r.entangled);
        let r = simon_test(&tmss(0.45, TmssOperation::AddBoth)).unwrap();
        assert!(r.entangled);
    }

    #[test]
    fn dephased_cat_escapes_duan() {
        let st = make_dephased_cat(CatSpec { nu: 0.5, p: 0.3 }).unwrap();
        for g in [0.5, 1.0, 1.5, 3.0] {
            for phi in [0.0, 0.7, 1.9] {
                assert!(!duan_test(&st, g, phi, -phi).unwrap().entangled);
                assert!(!duan_test(&st, g, phi, 0.4).unwrap().entangled);
            }
        }
        assert!(!simon_test(&st).unwrap().entangled);
    }

    #[test]
    fn duan_detection_implies_simon_detection() {
        let mut states = Vec::new();
        for s in [0.1, 0.3, 0.6] {
            for op in [TmssOperation::None, TmssOperation::SubtractBoth, TmssOperation::AddBoth] {
                states.push(tmss(s, op));
            }
        }
        for c0 in [0.1, 0.5, 0.9] {
            states.push(crate::catalog::make_psi_b(c0).unwrap());
        }
        for st in &states {
            let simon = simon_test(st).unwrap().entangled;
            for g in [0.7, 1.0, 1.4] {
                for phi in [0.0, 1.0, 2.0] {
                    if duan_test(st, g, phi, 0.0).unwrap().entangled {
                        assert!(simon);
                    }
                }
            }
        }
    }

    #[test]
    fn two_term_superposition_needs_dominant_vacuum() {
        for c0 in [0.1, 0.3, 0.5, 0.7, 0.75, 0.9] {
            let c1 = (1.0f64 - c0 * c0).sqrt();
            let r = simon_test(&crate::catalog::make_psi_b(c0).unwrap()).unwrap();
            let a = (1.0 + 2.0 * c1 * c1) / 4.0;
            let c = c0 * c1 / 2.0;
            assert!((r.covariance[0][0] - a).abs() < 1e-12);
            assert!((r.covariance[0][2] - c).abs() < 1e-12);
            assert!((r.nu_minus_pt - (a - c)).abs() < 1e-9);
            assert_eq!(r.entangled, c0 > std::f64::consts::FRAC_1_SQRT_2, "c0 = {c0}");
        }
    }
}
