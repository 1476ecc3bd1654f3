//! Separability bounds for functional EPR witnesses.
//!
//! For a separable state `⟨F(O)⟩` lies between the extrema of
//! `O_n = (−1)ⁿ ∫₀^∞ F(z) e^{−z} L_n(2z) dz` over `n ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_laguerre, integrate_adaptive};
use crate::special::{bessel_j0, binomial, laguerre_scaled, ln_factorial};

/// Witness test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `F(z) = e^{−Cz}(1 + Σ_m D_m z^m)`, `d[0]` being `D₁`.
    Exponential { c: f64, d: Vec<f64> },
    /// `F(z) = z^m`.
    Power { m: u32 },
}

impl TestFunction {
    pub fn exponential(c: f64, d: Vec<f64>) -> Result<Self> {
        let f = TestFunction::Exponential { c, d };
        f.validate()?;
        Ok(f)
    }

    /// `e^{−Cz}(1 + Dz)`.
    pub fn linear(c: f64, d: f64) -> Result<Self> {
        Self::exponential(c, vec![d])
    }

    pub fn power(m: u32) -> Result<Self> {
        let f = TestFunction::Power { m };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Exponential { c, d } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("decay rate C = {c} must be > 0")));
                }
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("non-finite polynomial coefficient".into()));
                }
                Ok(())
            }
            TestFunction::Power { m } => {
                if *m == 0 {
                    return Err(Error::InvalidParameter("power form needs m ≥ 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Polynomial degree `M` of the prefactor (or the power `m`).
    pub fn degree(&self) -> usize {
        match self {
            TestFunction::Exponential { d, .. } => d.len(),
            TestFunction::Power { m } => *m as usize,
        }
    }

    /// Coefficients `1, D₁, …, D_M` (or the monomial `z^m`) of the polynomial part.
    pub fn poly_coefficients(&self) -> Vec<f64> {
        match self {
            TestFunction::Exponential { d, .. } => std::iter::once(1.0).chain(d.iter().copied()).collect(),
            TestFunction::Power { m } => {
                let mut v = vec![0.0; *m as usize + 1];
                v[*m as usize] = 1.0;
                v
            }
        }
    }

    /// Exponential decay rate, zero for the power form.
    pub fn decay(&self) -> f64 {
        match self {
            TestFunction::Exponential { c, .. } => *c,
            TestFunction::Power { .. } => 0.0,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            TestFunction::Exponential { c, d } => (-c * z).exp() * (1.0 + z * horner(d, z)),
            TestFunction::Power { m } => z.powi(*m as i32),
        }
    }

    /// `F(s·z)` expressed in the same family.
    pub fn rescaled(&self, s: f64) -> TestFunction {
        match self {
            TestFunction::Exponential { c, d } => TestFunction::Exponential {
                c: c * s,
                d: d.iter().enumerate().map(|(k, v)| v * s.powi(k as i32 + 1)).collect(),
            },
            TestFunction::Power { .. } => self.clone(),
        }
    }
}

/// `Σ_k d[k] z^k`.
fn horner(d: &[f64], z: f64) -> f64 {
    d.iter().rev().fold(0.0, |acc, v| acc * z + v)
}

/// Bound sequence and its extrema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityBounds {
    pub values: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub n_at_min: usize,
    pub n_at_max: usize,
    pub converged: bool,
    /// Upper bound on `|O_n|` for every `n` beyond the computed range.
    pub tail_bound: f64,
}

impl SeparabilityBounds {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::ProvisionalBounds {
                tail_bound: self.tail_bound,
            })
        }
    }

    /// Multiplies every bound by `s > 0`.
    fn scaled(mut self, s: f64) -> Self {
        for v in self.values.iter_mut() {
            *v *= s;
        }
        self.f_min *= s;
        self.f_max *= s;
        self.tail_bound *= s;
        self
    }
}

/// `O_n` from the two-dimensional integral
/// `4∫∫ F(2x²) e^{−y²/2} L_n(y²) J₀(2xy) x y dx dy` by nested adaptive quadrature.
///
/// Slow; kept as an independent check of the one-dimensional reduction.
pub fn bound_via_2d_quadrature(f: &TestFunction, n: usize) -> Result<f64> {
    f.validate()?;
    let c = match f {
        TestFunction::Exponential { c, .. } => *c,
        TestFunction::Power { .. } => {
            return Err(Error::Quadrature(
                "power test functions are not absolutely integrable against the Bessel kernel".into(),
            ))
        }
    };
    let m = f.degree() as f64;
    // F(2x²) ≈ e^{−2Cx²}(2x²)^M is negligible past x_max.
    let mut x_max = ((40.0 + m * 10.0) / (2.0 * c)).sqrt();
    while f.eval(2.0 * x_max * x_max).abs() * x_max > 1e-18 {
        x_max *= 1.25;
    }
    // e^{−y²/2} L_n(y²) ≤ e^{−y²/2} e^{y²/2} only in the oscillatory region; the
    // Gaussian wins beyond y² ≈ 4n.
    let mut y_max = (4.0 * n as f64 + 80.0).sqrt();
    while (laguerre_scaled(n, y_max * y_max, -0.5 * y_max * y_max) * y_max).abs() > 1e-18 {
        y_max *= 1.2;
    }
    let inner_pieces = 8 + n;
    let mut failure = None;
    let outer = integrate_adaptive(
        |y| {
            let w = laguerre_scaled(n, y * y, -0.5 * y * y) * y;
            if w == 0.0 {
                return 0.0;
            }
            let pieces = inner_pieces + (2.0 * x_max * y / std::f64::consts::PI) as usize;
            match integrate_adaptive(
                |x| f.eval(2.0 * x * x) * bessel_j0(2.0 * x * y) * x,
                0.0,
                x_max,
                1e-13,
                1e-12,
                pieces,
            ) {
                Ok(i) => 4.0 * w * i.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        y_max,
        1e-10,
        1e-11,
        8 + 2 * n,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if outer.abs_error > 1e-8 {
        return Err(Error::Quadrature(format!(
            "2D bound for n = {n}: error estimate {:.3e} above 1e-8",
            outer.abs_error
        )));
    }
    Ok(outer.value)
}

/// `O_n` by Gauss–Laguerre quadrature of the one-dimensional reduction.
///
/// After `z = u/(1+C)` the integrand is `e^{−u}` times a polynomial of degree
/// `n + M`, so a rule with `⌈(n+M+1)/2⌉` nodes is exact.
pub fn bound_via_1d_reduction(f: &TestFunction, n: usize) -> Result<f64> {
    f.validate()?;
    let rule = gauss_laguerre(laguerre_points(n, f.degree()));
    Ok(reduction_with_rule(f, n, &rule.nodes, &rule.scaled_weights))
}

fn laguerre_points(n: usize, degree: usize) -> usize {
    (n + degree) / 2 + 4
}

fn reduction_with_rule(f: &TestFunction, n: usize, nodes: &[f64], scaled_weights: &[f64]) -> f64 {
    let a = 1.0 + f.decay();
    let poly = f.poly_coefficients();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let sum: f64 = nodes
        .iter()
        .zip(scaled_weights)
        .map(|(&u, &w)| {
            let z = u / a;
            let p = poly.iter().rev().fold(0.0, |acc, v| acc * z + v);
            w * p * laguerre_scaled(n, 2.0 * z, -u)
        })
        .sum();
    sign * sum / a
}

/// `O_0 ..= O_{n_max}` on one rule, running the Laguerre recurrence once per
/// node with the same rescaling as [`laguerre_scaled`].
fn reduction_sweep(f: &TestFunction, n_max: usize, nodes: &[f64], scaled_weights: &[f64]) -> Vec<f64> {
    let a = 1.0 + f.decay();
    let poly = f.poly_coefficients();
    let mut acc = vec![0.0; n_max + 1];
    for (&u, &w) in nodes.iter().zip(scaled_weights) {
        let z = u / a;
        let x = 2.0 * z;
        let wp = w * poly.iter().rev().fold(0.0, |s, v| s * z + v);
        if wp == 0.0 {
            continue;
        }
        let emit = |k: usize, v: f64, ln_scale: f64, acc: &mut [f64]| {
            if v != 0.0 {
                acc[k] += wp * v.signum() * (v.abs().ln() + ln_scale - u).exp();
            }
        };
        let (mut prev, mut cur, mut ln_scale) = (1.0, 1.0 - x, 0.0);
        emit(0, 1.0, 0.0, &mut acc);
        if n_max >= 1 {
            emit(1, cur, 0.0, &mut acc);
        }
        for k in 1..n_max {
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
            let big = cur.abs().max(prev.abs());
            if big > 1e150 {
                prev /= big;
                cur /= big;
                ln_scale += big.ln();
            }
            emit(k + 1, cur, ln_scale, &mut acc);
        }
    }
    acc.iter()
        .enumerate()
        .map(|(n, v)| if n % 2 == 0 { v / a } else { -v / a })
        .collect()
}

/// Closed form of `O_n` for `F(z) = e^{−Cz}(1 + Dz)`.
pub fn bound_closed_form(c: f64, d: f64, n: usize) -> f64 {
    if n == 0 {
        return (1.0 + c + d) / ((1.0 + c) * (1.0 + c));
    }
    (1.0 - c).powi(n as i32 - 1) / (1.0 + c).powi(n as i32 + 2)
        * (1.0 - c * c + d * (1.0 - c + 2.0 * n as f64))
}

/// `∫₀^∞ z^m e^{−az} L_n(2z) dz` as a finite sum in `r = (a−2)/a`.
///
/// With `absolute` set, every term enters with its magnitude, which bounds
/// the integral for all larger `n` simultaneously (see [`envelope`]).
fn moment_integral(n: usize, m: usize, a: f64, absolute: bool) -> f64 {
    let r = (a - 2.0) / a;
    let ln_pref = ln_factorial(m) - (m as f64 + 1.0) * a.ln();
    let mut s = 0.0;
    for j in 0..=m.min(n) {
        // ∫ z^m e^{-az} L_n(2z) = m! a^{-m-1} Σ_j C(m,j)(−1)^j C(n−j+m, m) r^{n−j}
        let coef = binomial(m, j) * binomial(n - j + m, m);
        let pow = r.abs().powi((n - j) as i32);
        let sign = if absolute {
            1.0
        } else {
            let neg_j = j % 2 == 1;
            let neg_r = r < 0.0 && (n - j) % 2 == 1;
            if neg_j ^ neg_r {
                -1.0
            } else {
                1.0
            }
        };
        s += sign * coef * pow;
    }
    s * ln_pref.exp()
}

/// `O_n` from the exact finite sum; agrees with the quadrature route.
pub fn bound_exact(f: &TestFunction, n: usize) -> f64 {
    let a = 1.0 + f.decay();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * f
        .poly_coefficients()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| c * moment_integral(n, m, a, false))
        .sum::<f64>()
}

/// `B(n) ≥ |O_n|` built from absolute values of the exact sum.
fn envelope(f: &TestFunction, n: usize) -> f64 {
    let a = 1.0 + f.decay();
    f.poly_coefficients()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| c.abs() * moment_integral(n, m, a, true))
        .sum()
}

/// Supremum of `B(n)` over `n > n_max`, or `None` when it cannot be found
/// in a reasonable scan.
fn tail_envelope(f: &TestFunction, n_max: usize) -> Option<f64> {
    let a = 1.0 + f.decay();
    let r = ((a - 2.0) / a).abs();
    if r >= 1.0 {
        return None;
    }
    // Each summand ratio B_j(n+1)/B_j(n) = (n−j+m+1)|r|/(n−j+1) falls below 1
    // once n − j + 1 > m|r|/(1−|r|); past that point B is decreasing.
    let m = f.degree() as f64;
    let n_star = (m * r / (1.0 - r)).ceil() as usize + f.degree();
    let last = (n_max + 1).max(n_star + 1);
    if last > n_max + 200_000 {
        return None;
    }
    Some(((n_max + 1)..=last).map(|n| envelope(f, n)).fold(0.0, f64::max))
}

/// Largest `n_max` the automatic extension will try.
pub const MAX_AUTO_N: usize = 512;

/// Margin by which the tail may widen the computed extrema when certifying.
pub const CERTIFICATION_MARGIN: f64 = 1e-10;

/// `O_0 … O_{n_max}` with extrema. If the tail envelope cannot certify the
/// extrema, `n_max` is doubled up to [`MAX_AUTO_N`]; failing that the result
/// is returned with `converged = false`.
pub fn separability_bounds(f: &TestFunction, n_max: usize) -> Result<SeparabilityBounds> {
    f.validate()?;
    let mut n_max = n_max;
    loop {
        let b = bounds_fixed(f, n_max)?;
        if b.converged || n_max >= MAX_AUTO_N {
            return Ok(b);
        }
        n_max = (2 * n_max.max(8)).min(MAX_AUTO_N);
    }
}

fn bounds_fixed(f: &TestFunction, n_max: usize) -> Result<SeparabilityBounds> {
    let rule = gauss_laguerre(laguerre_points(n_max, f.degree()));
    let values = reduction_sweep(f, n_max, &rule.nodes, &rule.scaled_weights);
    let (mut n_at_min, mut n_at_max) = (0, 0);
    for (n, v) in values.iter().enumerate() {
        if *v < values[n_at_min] {
            n_at_min = n;
        }
        if *v > values[n_at_max] {
            n_at_max = n;
        }
    }
    let (cmin, cmax) = (values[n_at_min], values[n_at_max]);

    if let TestFunction::Power { .. } = f {
        // O_n is increasing for powers: minimum at n = 0, no finite maximum.
        let increasing = values.windows(2).all(|w| w[1] >= w[0]);
        return Ok(SeparabilityBounds {
            values,
            f_min: cmin,
            f_max: f64::INFINITY,
            n_at_min,
            n_at_max: usize::MAX,
            converged: increasing && n_at_min == 0,
            tail_bound: f64::INFINITY,
        });
    }

    match tail_envelope(f, n_max) {
        Some(tail) => {
            let f_max = cmax.max(tail);
            let f_min = cmin.min(-tail);
            let converged =
                f_max - cmax <= CERTIFICATION_MARGIN && cmin - f_min <= CERTIFICATION_MARGIN;
            Ok(SeparabilityBounds {
                values,
                f_min,
                f_max,
                n_at_min,
                n_at_max,
                converged,
                tail_bound: tail,
            })
        }
        None => Ok(SeparabilityBounds {
            values,
            f_min: cmin,
            f_max: cmax,
            n_at_min,
            n_at_max,
            converged: false,
            tail_bound: f64::INFINITY,
        }),
    }
}

/// `½(g² + 1/g²)`, the separable limit of `⟨Δ²û′⟩ + ⟨Δ²v̂′⟩`.
pub fn duan_bound(g: f64) -> Result<f64> {
    if g == 0.0 || !g.is_finite() {
        return Err(Error::InvalidParameter(format!("gain g = {g} must be finite and nonzero")));
    }
    Ok(0.5 * (g * g + 1.0 / (g * g)))
}

/// Bounds for `⟨F(û′² + v̂′²)⟩` with gain `g`: the kernel argument `2x²`
/// becomes `(g² + 1/g²)x²`, i.e. `F(z) → F(κz/2)` with `κ = g² + 1/g²`.
pub fn separability_bounds_with_gain(
    f: &TestFunction,
    g: f64,
    n_max: usize,
) -> Result<SeparabilityBounds> {
    let s = duan_bound(g)?;
    match f {
        TestFunction::Exponential { .. } => separability_bounds(&f.rescaled(s), n_max),
        TestFunction::Power { m } => Ok(separability_bounds(f, n_max)?.scaled(s.powi(*m as i32))),
    }
}

/// Brute-force `O_n` by term-wise expansion of `L_n`; exact in exact
/// arithmetic, only used for small `n` in tests.
#[doc(hidden)]
pub fn bound_by_expansion(f: &TestFunction, n: usize) -> f64 {
    let a = 1.0 + f.decay();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut s = 0.0;
    for (m, c) in f.poly_coefficients().iter().enumerate() {
        for k in 0..=n {
            // C(n,k)(−2)^k/k! · (m+k)!/a^{m+k+1}
            let ln = ln_factorial(m + k) - ln_factorial(k) - (m + k + 1) as f64 * a.ln();
            s += c * binomial(n, k) * (-2f64).powi(k as i32) * ln.exp();
        }
    }
    sign * s
}
