//! Braunstein–Kimble teleportation through a two-mode resource.
//!
//! For a vacuum input the fidelity is the EPR functional `⟨e^{−Ô_EPR}⟩`; for
//! general inputs the output characteristic function is
//! `C_out(λ) = C_in(λ) C_AB(λ*, λ)` and overlaps use
//! `Tr[ρσ] = (1/π) ∫ C_ρ(λ) C_σ(−λ) d²λ`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bounds::TestFunction;
use crate::epr::{prepare, pure_epr_moments, EprMeasurementConfig, MeasuredState};
use crate::error::{Error, Result};
use crate::fock::{characteristic, PhaseSpaceGrid, TwoModeState};
use crate::quadrature::{gauss_hermite, integrate_adaptive};
use crate::special::{binomial, ln_factorial, ln_gamma};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleportReport {
    pub fidelity: f64,
    pub e1: f64,
    /// `1 − E₁`.
    pub lower_bound: f64,
    pub channel: String,
}

/// `1 − E₁`.
pub fn em_fidelity_bound(e1: f64) -> Result<f64> {
    if !(e1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("E1 = {e1} must be ≥ 0")));
    }
    Ok(1.0 - e1)
}

/// Vacuum-input fidelity `⟨e^{−Ô}⟩` with `E₁` and the bound `1 − E₁`.
pub fn fidelity_via_epr(state: &TwoModeState) -> Result<TeleportReport> {
    let measured = prepare(state, &EprMeasurementConfig::default())?;
    Ok(report_from_measured(&measured, "state"))
}

fn report_from_measured(measured: &MeasuredState, label: &str) -> TeleportReport {
    let f = TestFunction::Exponential { c: 1.0, d: vec![] };
    let fidelity = measured.expectation(&f);
    let e1 = measured.moments(1)[0];
    TeleportReport {
        fidelity,
        e1,
        lower_bound: 1.0 - e1,
        channel: label.to_string(),
    }
}

/// Partial sums `S_K = Σ_{m≤K} (−1)^m E_m/m!` for `K = 0..=moments.len()`,
/// given `E_1, E_2, …`.
pub fn series_partial_sums(moments: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    let mut out = vec![acc];
    for (i, e) in moments.iter().enumerate() {
        let m = i + 1;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * e * (-ln_factorial(m)).exp();
        out.push(acc);
    }
    out
}

/// Partial sums of the moment series of `⟨e^{−Ô}⟩` for a truncated state.
///
/// High moments are dominated by the cutoff tail; use
/// [`pure_fidelity_series`] with a generous cutoff when many terms matter.
pub fn fidelity_series(state: &TwoModeState, k_max: usize) -> Result<Vec<f64>> {
    let measured = prepare(state, &EprMeasurementConfig::default())?;
    Ok(series_partial_sums(&measured.moments(k_max)))
}

/// Partial sums of the moment series for a pure state `ψ(n_A, n_B)`.
pub fn pure_fidelity_series(psi: &DMatrix<Complex64>, k_max: usize) -> Vec<f64> {
    series_partial_sums(&pure_epr_moments(psi, k_max))
}

/// Resource characteristic `C_AB(λ*, λ)` entering the output map.
pub trait ChannelCharacteristic: Sync {
    fn epr_characteristic(&self, lambda: Complex64) -> Complex64;
}

/// Perfect EPR resource, `C_AB ≡ 1`.
pub struct IdealChannel;

impl ChannelCharacteristic for IdealChannel {
    fn epr_characteristic(&self, _: Complex64) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }
}

impl ChannelCharacteristic for TwoModeState {
    fn epr_characteristic(&self, lambda: Complex64) -> Complex64 {
        characteristic(self, lambda.conj(), lambda)
    }
}

/// `C_out(λ) = C_in(λ) C_AB(λ*, λ)` on the input grid.
pub fn bk_output_characteristic(
    c_in: &PhaseSpaceGrid<Complex64>,
    channel: &dyn ChannelCharacteristic,
) -> Result<PhaseSpaceGrid<Complex64>> {
    let out = PhaseSpaceGrid::from_fn(c_in.x, c_in.y, |x, y| {
        channel.epr_characteristic(Complex64::new(x, y))
    });
    let values: Vec<Complex64> = c_in.values.iter().zip(&out.values).map(|(a, b)| a * b).collect();
    let (ox, oy) = (c_in.x.len / 2, c_in.y.len / 2);
    let origin = c_in.x.value(ox).abs() < 1e-12 && c_in.y.value(oy).abs() < 1e-12;
    if origin {
        let c0 = values[ox * c_in.y.len + oy];
        if (c0 - Complex64::new(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::Grid(format!("C_out(0) = {c0}, expected 1")));
        }
    }
    Ok(PhaseSpaceGrid {
        x: c_in.x,
        y: c_in.y,
        values,
    })
}

/// Input states accepted by the characteristic-function route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TeleportInput {
    Coherent(Complex64),
    Fock(usize),
}

impl TeleportInput {
    /// `C_in(λ) C_in(−λ)` for the pure input.
    fn overlap_kernel(&self, lambda: Complex64) -> f64 {
        let r2 = lambda.norm_sqr();
        match self {
            TeleportInput::Coherent(_) => (-r2).exp(),
            TeleportInput::Fock(n) => {
                let l = crate::special::laguerre(*n, r2);
                (-r2).exp() * l * l
            }
        }
    }
}

/// Fidelity `(1/π) ∫ C_in(λ) C_in(−λ) C_AB(−λ*, −λ) d²λ` by 2D Gauss–Hermite.
pub fn fidelity_via_characteristic(
    input: TeleportInput,
    channel: &dyn ChannelCharacteristic,
    nodes: usize,
) -> f64 {
    let rule = gauss_hermite(nodes);
    let mut acc = 0.0;
    for (i, &x) in rule.nodes.iter().enumerate() {
        for (j, &y) in rule.nodes.iter().enumerate() {
            let lam = Complex64::new(x, y);
            let w = rule.scaled_weights[i] * rule.scaled_weights[j];
            let k = input.overlap_kernel(lam);
            if k == 0.0 {
                continue;
            }
            acc += w * k * channel.epr_characteristic(-lam).re;
        }
    }
    acc / PI
}

/// Flat-tailed symmetric quadrature distributions
/// `p_m(X) = 2(2m)!/(m!)² |X| exp(−(2(2m)!/m!)^{1/m} |X|^{2/m})`.
///
/// With `t = |X|^{2/m}` the variable `t` is Gamma-distributed with shape `m`
/// and rate `c = (2(2m)!/m!)^{1/m}`; every integral below is done in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmChannel {
    pub m: u32,
}

impl PmChannel {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("p_m needs m ≥ 1".into()));
        }
        Ok(PmChannel { m })
    }

    fn mf(&self) -> f64 {
        self.m as f64
    }

    fn ln_rate(&self) -> f64 {
        let m = self.mf();
        (2f64.ln() + ln_gamma(2.0 * m + 1.0) - ln_gamma(m + 1.0)) / m
    }

    /// `ln` of the prefactor `2(2m)!/(m!)²`.
    fn ln_amplitude(&self) -> f64 {
        let m = self.mf();
        2f64.ln() + ln_gamma(2.0 * m + 1.0) - 2.0 * ln_gamma(m + 1.0)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let ax = x.abs();
        let c = self.ln_rate().exp();
        (self.ln_amplitude() + ax.ln() - c * ax.powf(2.0 / self.mf())).exp()
    }

    fn t_density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let m = self.mf();
        let ln_c = self.ln_rate();
        (m * ln_c - ln_gamma(m) + (m - 1.0) * t.ln() - ln_c.exp() * t).exp()
    }

    /// Range of `t` covering the mass of `t^{m−1} e^{−ct}` weighted by up
    /// to `X²`, which tilts the shape to `2m`.
    fn t_range(&self) -> (f64, f64) {
        let m = self.mf();
        let c = self.ln_rate().exp();
        let lo = (m - 12.0 * m.sqrt()).max(0.0) / c;
        let hi = (2.0 * m + 14.0 * (2.0 * m).sqrt() + 30.0) / c;
        (lo, hi)
    }

    /// `E[g(|X|)]`.
    fn expect(&self, g: impl Fn(f64) -> f64, pieces: usize) -> Result<f64> {
        let (lo, hi) = self.t_range();
        let half_m = 0.5 * self.mf();
        let r = integrate_adaptive(
            |t| self.t_density(t) * g(t.powf(half_m)),
            lo,
            hi,
            1e-14,
            1e-12,
            pieces,
        )?;
        Ok(r.value)
    }

    /// `∫ p_m`.
    pub fn normalization(&self) -> Result<f64> {
        self.expect(|_| 1.0, 16)
    }

    /// `⟨X²⟩`.
    pub fn second_moment(&self) -> Result<f64> {
        self.expect(|x| x * x, 16)
    }

    /// `f₁ = ⟨e^{−2X²}⟩`.
    pub fn f1(&self) -> Result<f64> {
        self.expect(|x| (-2.0 * x * x).exp(), 32)
    }

    /// `C_p(k) = ⟨e^{−2√2 i k X}⟩`, real by symmetry.
    pub fn characteristic(&self, k: f64) -> Result<f64> {
        let b = 2.0 * 2f64.sqrt() * k;
        let pieces = 32 + (b.abs() * 8.0) as usize;
        self.expect(|x| (b * x).cos(), pieces)
    }

    /// `I_k = E_X[∫ λ^{2k} e^{−λ²} cos(2√2 λ X) dλ]` for `k = 0..=k_max`.
    fn gaussian_moments(&self, k_max: usize) -> Result<Vec<f64>> {
        (0..=k_max)
            .map(|k| self.expect(|x| smeared_moment(k, 2.0 * x * x), 32))
            .collect()
    }

    /// `Tr[ρ_in ρ_out]` for a Fock input `|n⟩` through the channel with
    /// `C_AB(λ*, λ) = C_p(λ_x) C_p(λ_y)`.
    pub fn fock_input_fidelity(&self, n: usize) -> Result<f64> {
        let moments = self.gaussian_moments(2 * n)?;
        Ok(fock_fidelity_from_moments(n, &moments))
    }

    /// Vacuum-input fidelity `f₁²`.
    pub fn vacuum_fidelity(&self) -> Result<f64> {
        Ok(self.f1()?.powi(2))
    }

    /// `E₁ = 2⟨X₁²⟩ + 2⟨P₂²⟩`.
    pub fn e1(&self) -> Result<f64> {
        Ok(4.0 * self.second_moment()?)
    }

    pub fn report(&self) -> Result<TeleportReport> {
        let e1 = self.e1()?;
        Ok(TeleportReport {
            fidelity: self.vacuum_fidelity()?,
            e1,
            lower_bound: 1.0 - e1,
            channel: format!("pm:m={}", self.m),
        })
    }
}

impl ChannelCharacteristic for PmChannel {
    fn epr_characteristic(&self, lambda: Complex64) -> Complex64 {
        let cx = self.characteristic(lambda.re).unwrap_or(f64::NAN);
        let cy = self.characteristic(lambda.im).unwrap_or(f64::NAN);
        Complex64::new(cx * cy, 0.0)
    }
}

/// `∫ λ^{2k} e^{−λ²} cos(bλ) dλ` with `β = b²/4`.
///
/// Equals `(−d/da)^k [√π a^{−1/2} e^{−β/a}]` at `a = 1`. Writing `y = 1/a`,
/// `−d/da = y² d/dy` and `(y² d/dy)^k (y^{1/2} e^{−βy}) = y^{1/2} e^{−βy} R_k(y)`
/// with `R_{k+1} = y² R_k′ + R_k (y/2 − β y²)`.
fn smeared_moment(k: usize, beta: f64) -> f64 {
    let mut r = vec![1.0];
    for _ in 0..k {
        let mut next = vec![0.0; r.len() + 2];
        for (p, &c) in r.iter().enumerate() {
            next[p + 1] += c * p as f64;
            next[p + 1] += 0.5 * c;
            next[p + 2] -= beta * c;
        }
        r = next;
    }
    PI.sqrt() * (-beta).exp() * r.iter().sum::<f64>()
}

/// `(1/π) Σ_j c_j Σ_i C(j,i) I_i I_{j−i}` with `L_n(r)² = Σ_j c_j r^j`.
fn fock_fidelity_from_moments(n: usize, moments: &[f64]) -> f64 {
    let mut l = vec![0.0; n + 1];
    for (k, c) in l.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *c = sign * binomial(n, k) * (-ln_factorial(k)).exp();
    }
    let mut sq = vec![0.0; 2 * n + 1];
    for (i, a) in l.iter().enumerate() {
        for (j, b) in l.iter().enumerate() {
            sq[i + j] += a * b;
        }
    }
    let mut acc = 0.0;
    for (j, c) in sq.iter().enumerate() {
        for i in 0..=j {
            acc += c * binomial(j, i) * moments[i] * moments[j - i];
        }
    }
    acc / PI
}

/// Fock-input fidelity of the ideal channel (`X ≡ 0`); equals 1.
pub fn ideal_fock_fidelity(n: usize) -> f64 {
    let moments: Vec<f64> = (0..=2 * n).map(|k| smeared_moment(k, 0.0)).collect();
    fock_fidelity_from_moments(n, &moments)
}
