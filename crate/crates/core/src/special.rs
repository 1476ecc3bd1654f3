//! Special functions: Laguerre and Hermite families, factorial logarithms and J₀.

use std::f64::consts::PI;

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence.
pub fn laguerre(n: usize, x: f64) -> f64 {
    assoc_laguerre(n, 0.0, x)
}

/// Generalized Laguerre polynomial `L_n^{(α)}(x)`.
pub fn assoc_laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `e^{ln_prefactor} · L_n(x)`, rescaling the recurrence so that neither
/// factor over- or underflows on its own.
pub fn laguerre_scaled(n: usize, x: f64, ln_prefactor: f64) -> f64 {
    let mut prev = 1.0;
    let mut cur = 1.0 - x;
    if n == 0 {
        return ln_prefactor.exp();
    }
    let mut ln_scale = 0.0;
    for k in 1..n {
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
    }
    if cur == 0.0 {
        return 0.0;
    }
    cur.signum() * (cur.abs().ln() + ln_scale + ln_prefactor).exp()
}

/// `L_0(x) ..= L_{n_max}(x)`.
pub fn laguerre_table(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(1.0 - x);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Orthonormal Hermite polynomials `H_m(t)/sqrt(2^m m!)` for `m = 0..=m_max`.
///
/// Grows like `e^{t²/2}`; multiply by a Gaussian before large-`t` use.
pub fn hermite_normalized(m_max: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(1.0);
    if m_max == 0 {
        return out;
    }
    out.push(2f64.sqrt() * t);
    for m in 1..m_max {
        let mf = m as f64;
        let next = (2.0 / (mf + 1.0)).sqrt() * t * out[m] - (mf / (mf + 1.0)).sqrt() * out[m - 1];
        out.push(next);
    }
    out
}

/// Hermite functions `π^{-1/4} e^{-t²/2} H_m(t)/sqrt(2^m m!)`, orthonormal in `dt`.
pub fn hermite_functions(m_max: usize, t: f64) -> Vec<f64> {
    // Start the recurrence from the Gaussian so large |t| cannot overflow.
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(PI.powf(-0.25) * (-0.5 * t * t).exp());
    if m_max == 0 {
        return out;
    }
    out.push(2f64.sqrt() * t * out[0]);
    for m in 1..m_max {
        let mf = m as f64;
        let next = (2.0 / (mf + 1.0)).sqrt() * t * out[m] - (mf / (mf + 1.0)).sqrt() * out[m - 1];
        out.push(next);
    }
    out
}

/// Fock-state quadrature wavefunctions `⟨x|m⟩` for `m = 0..=m_max` with
/// vacuum variance 1/4. Real-valued; the momentum wavefunction is
/// `⟨p|m⟩ = (−i)^m ⟨x=p|m⟩`.
pub fn quadrature_wavefunctions(m_max: usize, x: f64) -> Vec<f64> {
    let scale = 2f64.powf(0.25);
    let mut out = hermite_functions(m_max, 2f64.sqrt() * x);
    for v in &mut out {
        *v *= scale;
    }
    out
}
