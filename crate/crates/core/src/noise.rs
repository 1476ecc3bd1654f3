//! Thermal attenuation, `a → √η a + √(1−η) v` with `v` thermal of occupation `n_th`.
//!
//! The channel is realized as pure loss with transmissivity `η/G` followed by
//! a quantum-limited amplifier of gain `G = 1 + (1−η) n_th`. Both stages have
//! Kraus operators that shift photon number by a fixed amount, so they act on
//! the density matrix as weighted diagonal shifts.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convention::MAX_CUTOFF;
use crate::error::{Error, Result};
use crate::fock::{Mode, TwoModeState};
use crate::special::ln_factorial;

/// Where the admixture happens. The arithmetic is the same; the stage only
/// decides whether the measurement pipeline applies it before or after the
/// beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStage {
    #[default]
    Channel,
    Detection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eta: f64,
    pub n_th: f64,
    #[serde(default)]
    pub stage: NoiseStage,
}

impl NoiseSpec {
    pub fn new(eta: f64, n_th: f64, stage: NoiseStage) -> Result<Self> {
        let spec = NoiseSpec { eta, n_th, stage };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "transmissivity η = {} outside (0, 1]",
                self.eta
            )));
        }
        if !(self.n_th >= 0.0 && self.n_th.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "thermal occupation n_th = {} must be ≥ 0",
                self.n_th
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.eta == 1.0
    }

    fn gain(&self) -> f64 {
        1.0 + (1.0 - self.eta) * self.n_th
    }
}

/// Population allowed to be discarded when dropping empty top levels.
/// Coherences with the dropped levels scale like its square root.
const TRIM_TOLERANCE: f64 = 1e-20;

/// One Kraus operator `Σ_i c_i |i+shift⟩⟨i|`.
struct ShiftKraus {
    shift: isize,
    coeff: Vec<f64>,
}

fn loss_kraus(tau: f64, d: usize) -> Vec<ShiftKraus> {
    (0..d)
        .map(|k| ShiftKraus {
            shift: -(k as isize),
            coeff: (0..d)
                .map(|i| {
                    if i < k {
                        return 0.0;
                    }
                    let ln_binom = ln_factorial(i) - ln_factorial(k) - ln_factorial(i - k);
                    ln_binom.mul_add(0.5, 0.0).exp()
                        * tau.powf(0.5 * (i - k) as f64)
                        * (1.0 - tau).powf(0.5 * k as f64)
                })
                .collect(),
        })
        .filter(|op| op.coeff.iter().any(|&c| c != 0.0))
        .collect()
}

fn amplifier_weight(g: f64, i: usize, k: usize) -> f64 {
    let ln_binom = ln_factorial(i + k) - ln_factorial(i) - ln_factorial(k);
    let q = 1.0 - 1.0 / g;
    let ln_q = if k == 0 { 0.0 } else { k as f64 * q.ln() };
    (ln_binom + ln_q - (i + 1) as f64 * g.ln()).exp()
}

fn amplifier_kraus(g: f64, d_in: usize, d_out: usize) -> Vec<ShiftKraus> {
    let k_max = if g == 1.0 { 0 } else { d_out - 1 };
    (0..=k_max)
        .map(|k| ShiftKraus {
            shift: k as isize,
            coeff: (0..d_in)
                .map(|i| {
                    if i + k < d_out {
                        amplifier_weight(g, i, k).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect(),
        })
        .collect()
}

/// Population pushed beyond `d_out` by the amplifier.
fn amplifier_overflow(g: f64, populations: &[f64], d_out: usize) -> f64 {
    if g == 1.0 {
        return 0.0;
    }
    populations
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let kept: f64 = (0..d_out.saturating_sub(i)).map(|k| amplifier_weight(g, i, k)).sum();
            p * (1.0 - kept).max(0.0)
        })
        .sum()
}

fn apply_shift_kraus(
    state: &TwoModeState,
    mode: Mode,
    ops: &[ShiftKraus],
    d_out: usize,
) -> TwoModeState {
    let (da, db) = state.dims();
    let (oa, ob) = match mode {
        Mode::A => (d_out, db),
        Mode::B => (da, d_out),
    };
    let n_in = da * db;
    let n_out = oa * ob;
    let rho = state.matrix();
    let mut out = DMatrix::<Complex64>::zeros(n_out, n_out);
    let d_mode = match mode {
        Mode::A => da,
        Mode::B => db,
    };
    for op in ops {
        for i in 0..d_mode {
            let ci = op.coeff[i];
            let ti = i as isize + op.shift;
            if ci == 0.0 || ti < 0 || ti as usize >= d_out {
                continue;
            }
            let ti = ti as usize;
            for j in 0..d_mode {
                let cj = op.coeff[j];
                let tj = j as isize + op.shift;
                if cj == 0.0 || tj < 0 || tj as usize >= d_out {
                    continue;
                }
                let tj = tj as usize;
                let w = ci * cj;
                match mode {
                    Mode::A => {
                        for b2 in 0..db {
                            let (c_in, c_out) = (j * db + b2, tj * ob + b2);
                            for b1 in 0..db {
                                out[(ti * ob + b1, c_out)] += rho[(i * db + b1, c_in)] * w;
                            }
                        }
                    }
                    Mode::B => {
                        for a2 in 0..da {
                            let (c_in, c_out) = (a2 * db + j, a2 * ob + tj);
                            for a1 in 0..da {
                                out[(a1 * ob + ti, c_out)] += rho[(a1 * db + i, c_in)] * w;
                            }
                        }
                    }
                }
            }
        }
    }
    debug_assert_eq!(rho.nrows(), n_in);
    TwoModeState::from_matrix(oa, ob, out).expect("shift channels preserve Hermiticity")
}

fn apply_single_mode(state: &TwoModeState, spec: &NoiseSpec, mode: Mode) -> Result<TwoModeState> {
    let g = spec.gain();
    let tau = spec.eta / g;
    let d_in = match mode {
        Mode::A => state.dim_a(),
        Mode::B => state.dim_b(),
    };
    let lossy = apply_shift_kraus(state, mode, &loss_kraus(tau, d_in), d_in).trimmed(TRIM_TOLERANCE);
    if g == 1.0 {
        return Ok(lossy);
    }
    let (pa, pb) = lossy.populations();
    let pops = match mode {
        Mode::A => pa,
        Mode::B => pb,
    };
    let d_mid = pops.len();
    let mut d_out = d_mid + 2;
    loop {
        let overflow = amplifier_overflow(g, &pops, d_out);
        if overflow <= 1e-9 {
            break;
        }
        if d_out >= MAX_CUTOFF {
            if overflow <= 1e-6 {
                break;
            }
            return Err(Error::NotConverged {
                tail: overflow,
                suggested_cutoff: d_out + 8,
            });
        }
        d_out = (d_out + 4).min(MAX_CUTOFF);
    }
    let amplified = apply_shift_kraus(&lossy, mode, &amplifier_kraus(g, d_mid, d_out), d_out);
    Ok(amplified.trimmed(TRIM_TOLERANCE))
}

/// Applies the thermal attenuator independently to each listed mode.
pub fn apply_loss_thermal(
    state: &TwoModeState,
    spec: &NoiseSpec,
    modes: &[Mode],
) -> Result<TwoModeState> {
    spec.validate()?;
    if spec.is_identity() {
        return Ok(state.clone());
    }
    let mut out = state.clone();
    let mut seen_a = false;
    let mut seen_b = false;
    for &m in modes {
        let seen = match m {
            Mode::A => &mut seen_a,
            Mode::B => &mut seen_b,
        };
        if std::mem::replace(seen, true) {
            continue;
        }
        out = apply_single_mode(&out, spec, m)?;
    }
    let dev = (out.trace() - state.trace()).abs();
    if dev > 1e-6 {
        return Err(Error::NotConverged {
            tail: dev,
            suggested_cutoff: out.dim_a().max(out.dim_b()) + 8,
        });
    }
    Ok(out)
}

/// States at decoherence times `t = log η⁻¹`, both modes attenuated.
pub fn decoherence_trajectory(
    state: &TwoModeState,
    n_th: f64,
    times: &[f64],
) -> Result<Vec<TwoModeState>> {
    if times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("decoherence times must be finite and ≥ 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("decoherence times must increase".into()));
    }
    times
        .par_iter()
        .map(|&t| {
            let spec = NoiseSpec::new((-t).exp(), n_th, NoiseStage::Channel)?;
            apply_loss_thermal(state, &spec, &[Mode::A, Mode::B])
        })
        .collect()
}
