//! Quadrature rules: Gauss–Hermite and Gauss–Laguerre (Golub–Welsch with
//! Newton polishing), adaptive Gauss–Kronrod, and composite Simpson weights.
//!
//! The Gauss rules store "scaled" weights `w_i · e^{t_i²}` (Hermite) and
//! `w_i · e^{x_i}` (Laguerre). Those are computed from Christoffel sums of
//! Hermite/Laguerre *functions*, so they keep full relative precision even
//! for nodes far in the tail where the raw weights underflow.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::special::hermite_functions;

/// A Gauss rule with nodes and weights scaled by the inverse weight function.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub scaled_weights: Vec<f64>,
}

fn jacobi_eigenvalues(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Gauss–Hermite rule for `∫ e^{-t²} f(t) dt`.
///
/// `∫ g(t) dt ≈ Σ scaled_weights[i] · g(nodes[i])` for `g = e^{-t²}·poly`,
/// which is how callers use it with Hermite functions directly.
pub fn gauss_hermite(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(build_gauss_hermite(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn build_gauss_hermite(n: usize) -> GaussRule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut nodes = jacobi_eigenvalues(&diag, &off);
    let mut scaled_weights = Vec::with_capacity(n);
    for t in nodes.iter_mut() {
        // Newton on the Hermite function χ_n; χ_n' = sqrt(2n) χ_{n-1} − t χ_n.
        for _ in 0..4 {
            let h = hermite_functions(n, *t);
            let d = (2.0 * n as f64).sqrt() * h[n - 1] - *t * h[n];
            if d == 0.0 {
                break;
            }
            let step = h[n] / d;
            *t -= step;
            if step.abs() < 1e-16 * (1.0 + t.abs()) {
                break;
            }
        }
        let h = hermite_functions(n - 1, *t);
        let sum: f64 = h.iter().map(|v| v * v).sum();
        scaled_weights.push(1.0 / sum);
    }
    GaussRule {
        nodes,
        scaled_weights,
    }
}

/// Laguerre functions `e^{-x/2} L_k(x)` for `k = 0..=k_max`.
fn laguerre_functions(k_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    let g = (-0.5 * x).exp();
    out.push(g);
    if k_max == 0 {
        return out;
    }
    out.push((1.0 - x) * g);
    for k in 1..k_max {
        let kf = k as f64;
        out.push(((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0));
    }
    out
}

/// Gauss–Laguerre rule for `∫_0^∞ e^{-x} f(x) dx`.
///
/// `∫ e^{-x} f(x) dx ≈ Σ scaled_weights[i] · e^{-x_i} f(x_i)`.
pub fn gauss_laguerre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(build_gauss_laguerre(n));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

fn build_gauss_laguerre(n: usize) -> GaussRule {
    assert!(n >= 1);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    let mut nodes = jacobi_eigenvalues(&diag, &off);
    let mut scaled_weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let l = laguerre_functions(n, *x);
            // d/dx [e^{-x/2} L_n] at a root equals e^{-x/2} L_n' = n(ℓ_n − ℓ_{n−1})/x.
            let d = n as f64 * (l[n] - l[n - 1]) / *x;
            if d == 0.0 {
                break;
            }
            let step = l[n] / d;
            *x -= step;
            if step.abs() < 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        let l = laguerre_functions(n - 1, *x);
        let sum: f64 = l.iter().map(|v| v * v).sum();
        scaled_weights.push(1.0 / sum);
    }
    GaussRule {
        nodes,
        scaled_weights,
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod (10/21) integration on `[a, b]`.
///
/// `initial_pieces` splits the interval up front, which helps oscillatory
/// integrands whose first estimate would otherwise look spuriously converged.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    initial_pieces: usize,
) -> Result<Integral> {
    const MAX_INTERVALS: usize = 20_000;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("infinite integration limits".into()));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let pieces = initial_pieces.max(1);
    let mut intervals: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(pieces * 4);
    let width = (b - a) / pieces as f64;
    for k in 0..pieces {
        let lo = a + k as f64 * width;
        let hi = if k + 1 == pieces { b } else { lo + width };
        let (v, e) = gk21(&mut f, lo, hi);
        intervals.push((lo, hi, v, e));
    }
    let mut evaluations = 21 * pieces;
    loop {
        let value: f64 = intervals.iter().map(|i| i.2).sum();
        let error: f64 = intervals.iter().map(|i| i.3).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                abs_error: error,
                evaluations,
            });
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "no convergence after {evaluations} evaluations: value {value:.6e}, error estimate {error:.3e}"
            )));
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk21(&mut f, lo, mid);
        let (v2, e2) = gk21(&mut f, mid, hi);
        evaluations += 42;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Composite Simpson weights for `n` equally spaced points (n odd) with spacing `h`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd number of points >= 3");
    (0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        let rule = gauss_hermite(40);
        for k in 0..10 {
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.scaled_weights)
                .map(|(t, w)| w * (-t * t).exp() * t.powi(2 * k as i32))
                .sum();
            // ∫ t^{2k} e^{-t²} = Γ(k + 1/2)
            let want = libm::tgamma(k as f64 + 0.5);
            assert!((got - want).abs() < 1e-12 * want, "k={k} {got} {want}");
        }
        let total: f64 = rule
            .nodes
            .iter()
            .zip(&rule.scaled_weights)
            .map(|(t, w)| w * (-t * t).exp())
            .sum();
        assert!((total - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn laguerre_rule_integrates_polynomials() {
        let rule = gauss_laguerre(30);
        for k in 0..20 {
            let got: f64 = rule
                .nodes
                .iter()
                .zip(&rule.scaled_weights)
                .map(|(x, w)| w * (-x).exp() * x.powi(k))
                .sum();
            let want = libm::tgamma(k as f64 + 1.0);
            assert!((got - want).abs() < 1e-11 * want, "k={k}");
        }
    }

    #[test]
    fn adaptive_handles_oscillation() {
        let r = integrate_adaptive(|x| (50.0 * x).cos(), 0.0, 3.0, 1e-12, 1e-12, 4).unwrap();
        assert!((r.value - (150.0f64).sin() / 50.0).abs() < 1e-11);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let n = 11;
        let h = 0.2;
        let w = simpson_weights(n, h);
        let s: f64 = (0..n).map(|i| w[i] * (i as f64 * h).powi(3)).sum();
        assert!((s - 2.0f64.powi(4) / 4.0).abs() < 1e-12);
    }
}
