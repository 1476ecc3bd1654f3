//! Example state families.
//!
//! Every constructor picks its Fock cutoffs adaptively: start at
//! `max(16, ⌈8 n̄⌉)` and grow in steps of 8 until the top-level population is
//! below the tail tolerance, failing past [`MAX_CUTOFF`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convention::{MAX_CUTOFF, TAIL_TOLERANCE};
use crate::error::{Error, Result};
use crate::fock::{displacement_matrix, read_state, TwoModeState};

/// Dephased two-mode cat `|ν,ν⟩⟨ν,ν| + |−ν,−ν⟩⟨−ν,−ν| − p(|ν,ν⟩⟨−ν,−ν| + h.c.)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatSpec {
    pub nu: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TmssOperation {
    None,
    SubtractBoth,
    AddBoth,
}

/// Two-mode squeezed vacuum, optionally with `a_A a_B` or `a_A† a_B†` applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmssSpec {
    pub s: f64,
    pub operation: TmssOperation,
}

fn initial_cutoff(mean_photons: f64) -> usize {
    16usize.max((8.0 * mean_photons).ceil() as usize)
}

/// Runs `build` on growing cutoffs until the tail invariant holds.
fn adaptive<F>(mean_photons: f64, mut build: F) -> Result<TwoModeState>
where
    F: FnMut(usize) -> Result<TwoModeState>,
{
    let mut d = initial_cutoff(mean_photons).min(MAX_CUTOFF);
    loop {
        let state = build(d)?;
        let tail = state.tail_population();
        if tail <= TAIL_TOLERANCE {
            return Ok(state);
        }
        if d >= MAX_CUTOFF {
            return Err(Error::NotConverged {
                tail,
                suggested_cutoff: d + 8,
            });
        }
        d = (d + 8).min(MAX_CUTOFF);
    }
}

/// Fock amplitudes of the coherent state `|α⟩` on levels `0..d`.
pub fn coherent_amplitudes(alpha: Complex64, d: usize) -> DVector<Complex64> {
    displacement_matrix(alpha, d).column(0).into_owned()
}

fn coherent_projector(alpha: Complex64, d: usize) -> DMatrix<Complex64> {
    let v = coherent_amplitudes(alpha, d);
    &v * v.adjoint()
}

fn thermal_matrix(nbar: f64, d: usize) -> DMatrix<Complex64> {
    let q = nbar / (1.0 + nbar);
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::new(q.powi(i as i32) / (1.0 + nbar), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Trace of the unnormalized cat operator, `2 − 2p e^{−4ν²}`.
pub fn cat_normalization(spec: CatSpec) -> f64 {
    2.0 - 2.0 * spec.p * (-4.0 * spec.nu * spec.nu).exp()
}

pub fn make_dephased_cat(spec: CatSpec) -> Result<TwoModeState> {
    let CatSpec { nu, p } = spec;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("dephasing p = {p} outside [0, 1]")));
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("cat amplitude ν = {nu} must be ≥ 0")));
    }
    if nu == 0.0 {
        return Ok(TwoModeState::vacuum(2, 2));
    }
    let expected_trace = cat_normalization(spec);
    adaptive(nu * nu, |d| {
        let plus = coherent_amplitudes(Complex64::new(nu, 0.0), d);
        let minus = coherent_amplitudes(Complex64::new(-nu, 0.0), d);
        let kp = plus.kronecker(&plus);
        let km = minus.kronecker(&minus);
        let pc = Complex64::new(p, 0.0);
        let m = &kp * kp.adjoint() + &km * km.adjoint()
            - (&kp * km.adjoint() + &km * kp.adjoint()) * pc;
        let raw = TwoModeState::from_matrix(d, d, m)?;
        let tr = raw.trace();
        if (tr - expected_trace).abs() > 1e-8 && raw.tail_population() <= TAIL_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "cat normalization {tr} differs from 2 − 2p·e^(−4ν²) = {expected_trace}"
            )));
        }
        raw.normalized()
    })
}

/// Amplitudes `ψ(n, n) = √(1−λ²) λⁿ`, `λ = tanh s`, on a `d × d` cutoff
/// (not renormalized).
pub fn tmss_amplitudes(s: f64, d: usize) -> DMatrix<Complex64> {
    let lam = s.tanh();
    let base = (1.0 - lam * lam).sqrt();
    DMatrix::from_fn(d, d, |a, b| {
        if a == b {
            Complex64::new(base * lam.powi(a as i32), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

pub fn make_tmss(spec: TmssSpec) -> Result<TwoModeState> {
    let TmssSpec { s, operation } = spec;
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("squeezing s = {s} must be ≥ 0")));
    }
    let lam = s.tanh();
    let nbar = s.sinh().powi(2);
    adaptive(nbar * 2.0 + 1.0, |d| {
        let mut amps = vec![Complex64::new(0.0, 0.0); d * d];
        let base = (1.0 - lam * lam).sqrt();
        for n in 0..d {
            let c = base * lam.powi(n as i32);
            let (level, weight) = match operation {
                TmssOperation::None => (Some(n), 1.0),
                TmssOperation::SubtractBoth => (n.checked_sub(1), n as f64),
                TmssOperation::AddBoth => (Some(n + 1).filter(|&k| k < d), (n + 1) as f64),
            };
            if let Some(k) = level {
                amps[k * d + k] += c * weight;
            }
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(
                "photon subtraction from the vacuum is undefined (s = 0)".into(),
            ));
        }
        for a in amps.iter_mut() {
            *a /= norm;
        }
        TwoModeState::from_pure(d, d, &amps)
    })
}

/// TMSS with the same mean photon number per mode as `state`.
pub fn energy_matched_tmss(state: &TwoModeState) -> TmssSpec {
    let (na, nb) = state.mean_photon_numbers();
    let nbar = 0.5 * (na + nb);
    TmssSpec {
        s: nbar.max(0.0).sqrt().asinh(),
        operation: TmssOperation::None,
    }
}

/// `c₀|00⟩ + √(1 − c₀²)|11⟩`.
pub fn make_psi_b(c0: f64) -> Result<TwoModeState> {
    if !(0.0..=1.0).contains(&c0) {
        return Err(Error::InvalidParameter(format!("c0 = {c0} outside [0, 1]")));
    }
    let c1 = (1.0 - c0 * c0).sqrt();
    TwoModeState::fock_superposition(&[
        (0, 0, Complex64::new(c0, 0.0)),
        (1, 1, Complex64::new(c1, 0.0)),
    ])
}

/// `|α⟩ ⊗ |β⟩`.
pub fn coherent_product(alpha: Complex64, beta: Complex64) -> Result<TwoModeState> {
    let nbar = alpha.norm_sqr().max(beta.norm_sqr());
    adaptive(nbar, |d| {
        TwoModeState::product(&coherent_projector(alpha, d), &coherent_projector(beta, d))
    })
}

/// Thermal state of occupation `nbar` on mode A, `|β⟩` on mode B.
pub fn thermal_coherent_product(nbar: f64, beta: Complex64) -> Result<TwoModeState> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidParameter(format!("thermal occupation {nbar} must be ≥ 0")));
    }
    adaptive(nbar.max(beta.norm_sqr()), |d| {
        TwoModeState::product(&thermal_matrix(nbar, d), &coherent_projector(beta, d))?
            .normalized()
    })
}

/// Declarative state description used by configuration files and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateSpec {
    Vacuum,
    Cat(CatSpec),
    Tmss(TmssSpec),
    PsiB { c0: f64 },
    Coherent { alpha: [f64; 2], beta: [f64; 2] },
    ThermalCoherent { nbar: f64, beta: [f64; 2] },
    File { path: String },
}

impl StateSpec {
    pub fn build(&self) -> Result<TwoModeState> {
        let c = |z: &[f64; 2]| Complex64::new(z[0], z[1]);
        match self {
            StateSpec::Vacuum => Ok(TwoModeState::vacuum(2, 2)),
            StateSpec::Cat(spec) => make_dephased_cat(*spec),
            StateSpec::Tmss(spec) => make_tmss(*spec),
            StateSpec::PsiB { c0 } => make_psi_b(*c0),
            StateSpec::Coherent { alpha, beta } => coherent_product(c(alpha), c(beta)),
            StateSpec::ThermalCoherent { nbar, beta } => thermal_coherent_product(*nbar, c(beta)),
            StateSpec::File { path } => {
                let f = std::fs::File::open(path)?;
                let state = read_state(std::io::BufReader::new(f))?;
                state.validate()?;
                Ok(state)
            }
        }
    }
}

impl fmt::Display for StateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpec::Vacuum => write!(f, "vacuum"),
            StateSpec::Cat(c) => write!(f, "cat:nu={},p={}", c.nu, c.p),
            StateSpec::Tmss(t) => {
                let op = match t.operation {
                    TmssOperation::None => "none",
                    TmssOperation::SubtractBoth => "subtract",
                    TmssOperation::AddBoth => "add",
                };
                write!(f, "tmss:s={},op={op}", t.s)
            }
            StateSpec::PsiB { c0 } => write!(f, "psi:c0={c0}"),
            StateSpec::Coherent { alpha, beta } => write!(
                f,
                "coherent:a={},ai={},b={},bi={}",
                alpha[0], alpha[1], beta[0], beta[1]
            ),
            StateSpec::ThermalCoherent { nbar, beta } => {
                write!(f, "thermal:nbar={nbar},b={},bi={}", beta[0], beta[1])
            }
            StateSpec::File { path } => write!(f, "file:{path}"),
        }
    }
}

/// Parses `family:key=value,...`, e.g. `cat:nu=0.5,p=0.3`, `tmss:s=0.5,op=add`,
/// `psi:c0=0.3`, `coherent:a=0.4,b=-0.2`, `thermal:nbar=0.5,b=1`, `file:state.txt`.
impl FromStr for StateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        if family == "file" {
            if rest.is_empty() {
                return Err(Error::Parse("file: needs a path".into()));
            }
            return Ok(StateSpec::File { path: rest.to_string() });
        }
        let mut kv = Vec::new();
        for part in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{part}`")))?;
            kv.push((k.trim().to_string(), v.trim().to_string()));
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match kv.iter().find(|(k, _)| k == key) {
                Some((_, v)) => v
                    .parse()
                    .map_err(|_| Error::Parse(format!("{family}: `{key}` is not a number: `{v}`"))),
                None => default.ok_or_else(|| Error::Parse(format!("{family}: missing `{key}`"))),
            }
        };
        let allowed: &[&str] = match family {
            "vacuum" => &[],
            "cat" => &["nu", "p"],
            "tmss" => &["s", "op"],
            "psi" => &["c0"],
            "coherent" => &["a", "ai", "b", "bi"],
            "thermal" => &["nbar", "b", "bi"],
            other => return Err(Error::Parse(format!("unknown state family `{other}`"))),
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Parse(format!("{family}: unknown key `{k}`")));
        }
        Ok(match family {
            "vacuum" => StateSpec::Vacuum,
            "cat" => StateSpec::Cat(CatSpec {
                nu: num("nu", None)?,
                p: num("p", None)?,
            }),
            "tmss" => {
                let op = kv.iter().find(|(k, _)| k == "op").map(|(_, v)| v.as_str());
                let operation = match op.unwrap_or("none") {
                    "none" => TmssOperation::None,
                    "subtract" | "subtract_both" => TmssOperation::SubtractBoth,
                    "add" | "add_both" => TmssOperation::AddBoth,
                    other => return Err(Error::Parse(format!("tmss: unknown op `{other}`"))),
                };
                StateSpec::Tmss(TmssSpec {
                    s: num("s", None)?,
                    operation,
                })
            }
            "psi" => StateSpec::PsiB { c0: num("c0", None)? },
            "coherent" => StateSpec::Coherent {
                alpha: [num("a", Some(0.0))?, num("ai", Some(0.0))?],
                beta: [num("b", Some(0.0))?, num("bi", Some(0.0))?],
            },
            _ => StateSpec::ThermalCoherent {
                nbar: num("nbar", None)?,
                beta: [num("b", Some(0.0))?, num("bi", Some(0.0))?],
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_at_zero_amplitude_is_vacuum() {
        for p in [0.0, 0.4, 1.0] {
            let s = make_dephased_cat(CatSpec { nu: 0.0, p }).unwrap();
            assert!((s.element(0, 0, 0, 0).re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cat_normalization_constant() {
        let spec = CatSpec { nu: 0.5, p: 0.3 };
        assert!((cat_normalization(spec) - (2.0 - 0.6 * (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn pure_cat_has_unit_purity() {
        let s = make_dephased_cat(CatSpec { nu: 0.5, p: 1.0 }).unwrap();
        s.validate().unwrap();
        assert!((s.purity() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dephased_cat_is_mixed_and_valid() {
        let s = make_dephased_cat(CatSpec { nu: 0.5, p: 0.3 }).unwrap();
        s.validate().unwrap();
        assert!(s.purity() < 1.0 - 1e-3);
        assert!(make_dephased_cat(CatSpec { nu: 0.5, p: 1.2 }).is_err());
    }

    #[test]
    fn tmss_statistics() {
        let s = make_tmss(TmssSpec { s: 0.0, operation: TmssOperation::None }).unwrap();
        assert!((s.element(0, 0, 0, 0).re - 1.0).abs() < 1e-15);
        let s = make_tmss(TmssSpec { s: 0.5, operation: TmssOperation::None }).unwrap();
        s.validate().unwrap();
        let (na, nb) = s.mean_photon_numbers();
        let want = 0.5f64.sinh().powi(2);
        assert!((na - want).abs() < 1e-9 && (nb - want).abs() < 1e-9);
    }

    #[test]
    fn subtracted_tmss_amplitudes() {
        let s = make_tmss(TmssSpec { s: 0.5, operation: TmssOperation::SubtractBoth }).unwrap();
        let lam = 0.5f64.tanh();
        // ⟨n−1,n−1|ψ⟩ ∝ n λⁿ, so consecutive diagonal ratios are ((n+1)λ/n)².
        for n in 1..6usize {
            let r = s.element(n, n, n, n).re / s.element(n - 1, n - 1, n - 1, n - 1).re;
            let want = ((n + 1) as f64 * lam / n as f64).powi(2);
            assert!((r - want).abs() < 1e-9);
        }
        let plain = make_tmss(TmssSpec { s: 0.5, operation: TmssOperation::None }).unwrap();
        assert!(s.mean_photon_numbers().0 > plain.mean_photon_numbers().0);
    }

    #[test]
    fn energy_matching() {
        let sub = make_tmss(TmssSpec { s: 0.5, operation: TmssOperation::SubtractBoth }).unwrap();
        let m = energy_matched_tmss(&sub);
        let matched = make_tmss(m).unwrap();
        let (a, b) = (matched.mean_photon_numbers().0, sub.mean_photon_numbers().0);
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn psi_b_and_products() {
        let s = make_psi_b(0.6).unwrap();
        let (na, nb) = s.mean_photon_numbers();
        assert!((na - 0.64).abs() < 1e-12 && (nb - 0.64).abs() < 1e-12);
        let c = coherent_product(Complex64::new(0.7, 0.1), Complex64::new(-0.3, 0.0)).unwrap();
        c.validate().unwrap();
        let t = thermal_coherent_product(0.5, Complex64::new(0.2, 0.0)).unwrap();
        t.validate().unwrap();
        assert!((t.mean_photon_numbers().0 - 0.5).abs() < 1e-7);
    }

    #[test]
    fn spec_strings_round_trip() {
        for text in [
            "vacuum",
            "cat:nu=0.5,p=0.3",
            "tmss:s=0.5,op=subtract",
            "psi:c0=0.3",
            "coherent:a=0.4,ai=0,b=-0.2,bi=0.1",
            "thermal:nbar=0.5,b=1,bi=0",
        ] {
            let spec: StateSpec = text.parse().unwrap();
            let again: StateSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
        assert!("cat:nu=0.5".parse::<StateSpec>().is_err());
        assert!("cat:nu=0.5,p=0.3,q=1".parse::<StateSpec>().is_err());
        assert!("blob".parse::<StateSpec>().is_err());
    }
}
