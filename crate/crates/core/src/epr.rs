//! Measurement of `Ô_EPR = û² + v̂²` with `û = X_A − X_B`, `v̂ = P_A + P_B`.
//!
//! After local phase shifts the two modes meet on a 50:50 splitter, so that
//! `û = √2 X₁` and `v̂ = √2 P₂` are read off by two homodyne detectors. Exact
//! expectations are traces against Fock-basis matrices of `X^{2k} e^{−2CX²}`;
//! the joint grid `P(x₁, p₂)` is used for sampling and as a cross-check.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{SeparabilityBounds, TestFunction};
use crate::error::{Error, Result};
use crate::fock::{beam_splitter_pure, Axis, Mode, PhaseSpaceGrid, TwoModeState};
use crate::noise::{apply_loss_thermal, NoiseSpec};
use crate::quadrature::{gauss_hermite, simpson_weights};
use crate::special::{binomial, hermite_normalized, quadrature_wavefunctions};

/// Grid used for the joint distribution. `half_width = None` picks
/// `8σ + |mean|` per axis from the measured state's moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub half_width: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 513,
            half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprMeasurementConfig {
    pub phi_a: f64,
    pub phi_b: f64,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    /// Thermal attenuation applied to both detector inputs after the splitter.
    #[serde(default)]
    pub detection_noise: Option<NoiseSpec>,
}

fn unit_gain() -> f64 {
    1.0
}

impl Default for EprMeasurementConfig {
    fn default() -> Self {
        EprMeasurementConfig {
            phi_a: 0.0,
            phi_b: 0.0,
            gain: 1.0,
            samples: 100_000,
            seed: 0,
            grid: GridSpec::default(),
            detection_noise: None,
        }
    }
}

impl EprMeasurementConfig {
    pub fn with_phases(phi_a: f64, phi_b: f64) -> Self {
        EprMeasurementConfig {
            phi_a,
            phi_b,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
        }
        if !(self.phi_a.is_finite() && self.phi_b.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        if self.gain != 1.0 {
            // û′ and v̂′ only commute at |g| = 1, so no joint distribution exists.
            return Err(Error::InvalidParameter(format!(
                "gain g = {} is only supported by the variance (Duan) test",
                self.gain
            )));
        }
        if self.grid.points < 5 || self.grid.points % 2 == 0 {
            return Err(Error::InvalidParameter("grid needs an odd number ≥ 5 of points".into()));
        }
        if let Some(n) = &self.detection_noise {
            n.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    Empirical,
}

/// `⟨F(Ô_EPR)⟩` with its spread `Δ_F` and standard error `δ_e = Δ_F/√N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessEstimate {
    pub mean: f64,
    pub delta_f: f64,
    /// `None` when only one sample is available.
    pub delta_e: Option<f64>,
    pub mode: EstimateMode,
    pub samples_used: usize,
}

/// One homodyne record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneSample {
    pub x1: f64,
    pub p2: f64,
    pub o_epr: f64,
}

impl HomodyneSample {
    pub fn new(x1: f64, p2: f64) -> Self {
        HomodyneSample {
            x1,
            p2,
            o_epr: 2.0 * x1 * x1 + 2.0 * p2 * p2,
        }
    }
}

/// The state at the detectors: rotated, split and optionally attenuated.
#[derive(Debug, Clone)]
pub struct MeasuredState {
    state: TwoModeState,
}

/// Rotates, splits and applies detection-stage noise.
pub fn prepare(state: &TwoModeState, cfg: &EprMeasurementConfig) -> Result<MeasuredState> {
    cfg.validate()?;
    let rotated = state.rotate(cfg.phi_a, cfg.phi_b);
    let split = rotated.beam_splitter(1e-10)?.state;
    let state = match &cfg.detection_noise {
        Some(n) if !n.is_identity() => apply_loss_thermal(&split, n, &[Mode::A, Mode::B])?,
        _ => split,
    };
    Ok(MeasuredState { state })
}

/// `⟨m| X^{2k} e^{−2cX²} |n⟩` for `k = 0..=k_max`.
fn position_matrices(c: f64, k_max: usize, d: usize) -> Vec<DMatrix<f64>> {
    // With t = √2 x the element is ∫ χ_m χ_n (t²/2)^k e^{−c t²} dt; after
    // t = s/√(1+c) the integrand is e^{−s²} times a polynomial of degree
    // m + n + 2k, integrated exactly by Gauss–Hermite.
    let rule = gauss_hermite(d + k_max + 2);
    let scale = 1.0 / (1.0 + c).sqrt();
    let mut out = vec![DMatrix::<f64>::zeros(d, d); k_max + 1];
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    for (&s, &w_scaled) in rule.nodes.iter().zip(&rule.scaled_weights) {
        let w = w_scaled * (-s * s).exp() * inv_sqrt_pi * scale;
        if w == 0.0 {
            continue;
        }
        let t = s * scale;
        let h = hermite_normalized(d - 1, t);
        let half_t2 = 0.5 * t * t;
        let mut wk = w;
        for g in out.iter_mut() {
            for m in 0..d {
                let hm = wk * h[m];
                for n in m..d {
                    g[(m, n)] += hm * h[n];
                }
            }
            wk *= half_t2;
        }
    }
    for g in out.iter_mut() {
        for m in 0..d {
            for n in 0..m {
                g[(m, n)] = g[(n, m)];
            }
        }
    }
    out
}

/// `E_m = ⟨Ô^m⟩` for `m = 1..=m_max` of the pure state with amplitudes
/// `ψ(n_A, n_B)` at zero phases. The splitter is applied without truncation,
/// which keeps high moments free of cutoff artifacts.
pub fn pure_epr_moments(psi: &DMatrix<Complex64>, m_max: usize) -> Vec<f64> {
    let out = beam_splitter_pure(psi);
    let d = out.nrows();
    let gx = position_matrices(0.0, m_max, d);
    let gp: Vec<DMatrix<f64>> = gx.iter().map(momentum_from_position).collect();
    let re = out.map(|z| z.re);
    let im = out.map(|z| z.im);
    // Re tr(Ψ† G Ψ Hᵀ) for real symmetric G, H.
    let local = |g: &DMatrix<f64>, h: &DMatrix<f64>| {
        let a = g * &re * h;
        let b = g * &im * h;
        re.dot(&a) + im.dot(&b)
    };
    let mut cache = vec![vec![f64::NAN; m_max + 1]; m_max + 1];
    (1..=m_max)
        .map(|m| {
            let mut s = 0.0;
            for k in 0..=m {
                let l = m - k;
                if cache[k][l].is_nan() {
                    cache[k][l] = local(&gx[k], &gp[l]);
                }
                s += binomial(m, k) * cache[k][l];
            }
            s * 2f64.powi(m as i32)
        })
        .collect()
}

/// Fock matrices of `X^{2k} e^{−2cX²}` and `P^{2k} e^{−2cP²}` for
/// `k = 0..=m_max`, shared between states of cutoff at most `dim`.
#[derive(Debug, Clone)]
pub struct QuadratureOperators {
    x: Vec<DMatrix<f64>>,
    p: Vec<DMatrix<f64>>,
}

impl QuadratureOperators {
    pub fn new(c: f64, m_max: usize, dim: usize) -> Self {
        let x = position_matrices(c, m_max, dim);
        let p = x.iter().map(momentum_from_position).collect();
        QuadratureOperators { x, p }
    }

    pub fn dim(&self) -> usize {
        self.x[0].nrows()
    }
}

/// Momentum counterpart: `⟨m|f(P)|n⟩ = i^{m−n} ⟨m|f(X)|n⟩` for even `f`.
fn momentum_from_position(g: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(g.nrows(), g.ncols(), |m, n| {
        let diff = m.abs_diff(n);
        if diff % 2 == 1 {
            0.0
        } else if (diff / 2) % 2 == 0 {
            g[(m, n)]
        } else {
            -g[(m, n)]
        }
    })
}

impl MeasuredState {
    pub fn state(&self) -> &TwoModeState {
        &self.state
    }

    /// `⟨e^{−cÔ} Ô^m⟩` for `m = 0..=m_max`.
    pub fn basis_expectations(&self, c: f64, m_max: usize) -> Vec<f64> {
        let (d1, d2) = self.state.dims();
        self.basis_expectations_with(&QuadratureOperators::new(c, m_max, d1.max(d2)))
    }

    /// [`basis_expectations`](Self::basis_expectations) with prebuilt
    /// operators, whose cutoff must cover the state's.
    pub fn basis_expectations_with(&self, ops: &QuadratureOperators) -> Vec<f64> {
        let m_max = ops.x.len() - 1;
        let mut cache = vec![vec![f64::NAN; m_max + 1]; m_max + 1];
        (0..=m_max)
            .map(|m| {
                let mut s = 0.0;
                for k in 0..=m {
                    let l = m - k;
                    if cache[k][l].is_nan() {
                        cache[k][l] = self.state.expect_local_real(&ops.x[k], &ops.p[l]);
                    }
                    s += binomial(m, k) * cache[k][l];
                }
                s * 2f64.powi(m as i32)
            })
            .collect()
    }

    /// `⟨F(Ô)⟩`.
    pub fn expectation(&self, f: &TestFunction) -> f64 {
        let coeffs = f.poly_coefficients();
        let g = self.basis_expectations(f.decay(), coeffs.len() - 1);
        coeffs.iter().zip(&g).map(|(a, b)| a * b).sum()
    }

    /// `⟨F(Ô)⟩` and `⟨F(Ô)²⟩`.
    pub fn first_two_moments(&self, f: &TestFunction) -> (f64, f64) {
        let coeffs = f.poly_coefficients();
        let m = coeffs.len() - 1;
        let mean: f64 = {
            let g = self.basis_expectations(f.decay(), m);
            coeffs.iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let sq = poly_square(&coeffs);
        let g2 = self.basis_expectations(2.0 * f.decay(), 2 * m);
        let second: f64 = sq.iter().zip(&g2).map(|(a, b)| a * b).sum();
        (mean, second)
    }

    /// `E_m = ⟨Ô^m⟩` for `m = 1..=m_max`.
    pub fn moments(&self, m_max: usize) -> Vec<f64> {
        self.basis_expectations(0.0, m_max)[1..].to_vec()
    }

    /// Means and standard deviations of `X₁` and `P₂`.
    fn marginal_moments(&self) -> ([f64; 2], [f64; 2]) {
        let cov = self.state.covariance();
        (
            [cov.mean[0], cov.mean[3]],
            [cov.matrix[0][0].max(0.0).sqrt(), cov.matrix[3][3].max(0.0).sqrt()],
        )
    }

    fn default_axes(&self, grid: &GridSpec) -> (Axis, Axis) {
        let (mean, sd) = self.marginal_moments();
        let hw = |k: usize| grid.half_width.unwrap_or(8.0 * sd[k] + mean[k].abs());
        (Axis::symmetric(hw(0), grid.points), Axis::symmetric(hw(1), grid.points))
    }

    /// `P(x₁, p₂)` on the configured grid, checked for non-negativity and
    /// unit Simpson mass.
    pub fn distribution(&self, grid: &GridSpec) -> Result<PhaseSpaceGrid<f64>> {
        let (ax, ap) = self.default_axes(grid);
        let g = self.distribution_on(ax, ap);
        check_distribution(&g)?;
        Ok(g)
    }

    /// `P(x₁, p₂)` on explicit axes, no checks.
    pub fn distribution_on(&self, ax: Axis, ap: Axis) -> PhaseSpaceGrid<f64> {
        let (d1, d2) = self.state.dims();
        let rho = self.state.matrix();
        // φ_n(p) = (−i)^n ψ_n(p)
        let phase = |n: usize| match n % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
        let phi: Vec<Vec<Complex64>> = ap
            .values()
            .map(|p| {
                quadrature_wavefunctions(d2 - 1, p)
                    .iter()
                    .enumerate()
                    .map(|(n, v)| phase(n) * *v)
                    .collect()
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..ax.len)
            .into_par_iter()
            .map(|ix| {
                let psi = quadrature_wavefunctions(d1 - 1, ax.value(ix));
                // Q[m2][n2] = Σ ψ_{m1} ψ_{n1} ρ[(m1,m2),(n1,n2)]
                let mut half = DMatrix::<Complex64>::zeros(d2, d1 * d2);
                for m1 in 0..d1 {
                    let w = psi[m1];
                    for m2 in 0..d2 {
                        let r = m1 * d2 + m2;
                        for col in 0..d1 * d2 {
                            half[(m2, col)] += rho[(r, col)] * w;
                        }
                    }
                }
                let mut q = DMatrix::<Complex64>::zeros(d2, d2);
                for n1 in 0..d1 {
                    let w = psi[n1];
                    for n2 in 0..d2 {
                        let col = n1 * d2 + n2;
                        for m2 in 0..d2 {
                            q[(m2, n2)] += half[(m2, col)] * w;
                        }
                    }
                }
                phi.iter()
                    .map(|f| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for n2 in 0..d2 {
                            let mut inner = Complex64::new(0.0, 0.0);
                            for m2 in 0..d2 {
                                inner += f[m2] * q[(m2, n2)];
                            }
                            acc += inner * f[n2].conj();
                        }
                        acc.re
                    })
                    .collect()
            })
            .collect();
        PhaseSpaceGrid {
            x: ax,
            y: ap,
            values: rows.into_iter().flatten().collect(),
        }
    }
}

/// Coefficients of `(Σ c_k z^k)²`.
fn poly_square(c: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; 2 * c.len() - 1];
    for (i, a) in c.iter().enumerate() {
        for (j, b) in c.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Simpson mass of a grid.
pub fn grid_integral(g: &PhaseSpaceGrid<f64>, f: impl Fn(f64, f64) -> f64) -> f64 {
    let wx = simpson_weights(g.x.len, g.x.step);
    let wy = simpson_weights(g.y.len, g.y.step);
    let mut s = 0.0;
    for ix in 0..g.x.len {
        let x = g.x.value(ix);
        let mut row = 0.0;
        for iy in 0..g.y.len {
            row += wy[iy] * g.at(ix, iy) * f(x, g.y.value(iy));
        }
        s += wx[ix] * row;
    }
    s
}

fn check_distribution(g: &PhaseSpaceGrid<f64>) -> Result<()> {
    let peak = g.values.iter().copied().fold(0.0, f64::max);
    let most_negative = g.values.iter().copied().fold(0.0, f64::min);
    if most_negative < -1e-9 * peak.max(1.0) {
        return Err(Error::Grid(format!("negative probability {most_negative:.3e}")));
    }
    let mass = grid_integral(g, |_, _| 1.0);
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Grid(format!(
            "distribution mass {mass} differs from 1; enlarge or refine the grid"
        )));
    }
    Ok(())
}

pub fn joint_quadrature_distribution(
    state: &TwoModeState,
    cfg: &EprMeasurementConfig,
) -> Result<PhaseSpaceGrid<f64>> {
    prepare(state, cfg)?.distribution(&cfg.grid)
}

pub fn exact_expectation(
    state: &TwoModeState,
    f: &TestFunction,
    cfg: &EprMeasurementConfig,
) -> Result<WitnessEstimate> {
    f.validate()?;
    let measured = prepare(state, cfg)?;
    Ok(exact_from_measured(&measured, f, cfg.samples))
}

/// Exact estimate with the predictive error bar for `samples` draws.
pub fn exact_from_measured(measured: &MeasuredState, f: &TestFunction, samples: usize) -> WitnessEstimate {
    let (mean, second) = measured.first_two_moments(f);
    let delta_f = (second - mean * mean).max(0.0).sqrt();
    WitnessEstimate {
        mean,
        delta_f,
        delta_e: Some(delta_f / (samples.max(1) as f64).sqrt()),
        mode: EstimateMode::Exact,
        samples_used: samples,
    }
}

pub fn epr_moments(state: &TwoModeState, m_max: usize, cfg: &EprMeasurementConfig) -> Result<Vec<f64>> {
    Ok(prepare(state, cfg)?.moments(m_max))
}

/// Samples per RNG shard; part of the reproducibility contract.
pub const SHARD_SIZE: usize = 16_384;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of shard `k`.
pub fn shard_seed(seed: u64, k: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Inverse CDF of the density `∝ α(1−s) + βs` on `[0, 1]`.
fn linear_inverse_cdf(alpha: f64, beta: f64, u: f64) -> f64 {
    let total = alpha + beta;
    if total <= 0.0 {
        return u;
    }
    // α s + (β − α) s²/2 = u (α + β)/2, rationalized to avoid cancellation.
    let rhs = u * total;
    let disc = (alpha * alpha + (beta - alpha) * rhs).max(0.0);
    let den = alpha + disc.sqrt();
    if den <= 0.0 {
        return u.sqrt();
    }
    (rhs / den).clamp(0.0, 1.0)
}

/// Sampler over a bilinearly interpolated grid density.
pub struct GridSampler<'a> {
    grid: &'a PhaseSpaceGrid<f64>,
    cdf: Vec<f64>,
}

impl<'a> GridSampler<'a> {
    pub fn new(grid: &'a PhaseSpaceGrid<f64>) -> Result<Self> {
        let (nx, ny) = (grid.x.len, grid.y.len);
        if nx < 2 || ny < 2 {
            return Err(Error::Grid("sampler needs at least 2×2 points".into()));
        }
        let v = |ix: usize, iy: usize| grid.at(ix, iy).max(0.0);
        let mut cdf = Vec::with_capacity((nx - 1) * (ny - 1));
        let mut acc = 0.0;
        for ix in 0..nx - 1 {
            for iy in 0..ny - 1 {
                acc += v(ix, iy) + v(ix + 1, iy) + v(ix, iy + 1) + v(ix + 1, iy + 1);
                cdf.push(acc);
            }
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::Grid("distribution has no positive mass".into()));
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        Ok(GridSampler { grid, cdf })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> HomodyneSample {
        let ny = self.grid.y.len;
        let u: f64 = rng.random();
        let cell = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let (ix, iy) = (cell / (ny - 1), cell % (ny - 1));
        let v = |ix: usize, iy: usize| self.grid.at(ix, iy).max(0.0);
        let (a, b, c, d) = (v(ix, iy), v(ix + 1, iy), v(ix, iy + 1), v(ix + 1, iy + 1));
        let s = linear_inverse_cdf(a + c, b + d, rng.random());
        let t = linear_inverse_cdf((1.0 - s) * a + s * b, (1.0 - s) * c + s * d, rng.random());
        let x1 = self.grid.x.value(ix) + s * self.grid.x.step;
        let p2 = self.grid.y.value(iy) + t * self.grid.y.step;
        HomodyneSample::new(x1, p2)
    }
}

/// `n` draws in shards of [`SHARD_SIZE`], shard `k` seeded by [`shard_seed`].
pub fn sample_grid(grid: &PhaseSpaceGrid<f64>, n: usize, seed: u64) -> Result<Vec<HomodyneSample>> {
    let sampler = GridSampler::new(grid)?;
    let shards = n.div_ceil(SHARD_SIZE);
    let parts: Vec<Vec<HomodyneSample>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, k as u64));
            let len = SHARD_SIZE.min(n - k * SHARD_SIZE);
            (0..len).map(|_| sampler.draw(&mut rng)).collect()
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

pub fn sample_homodyne(state: &TwoModeState, cfg: &EprMeasurementConfig) -> Result<Vec<HomodyneSample>> {
    let grid = joint_quadrature_distribution(state, cfg)?;
    sample_grid(&grid, cfg.samples, cfg.seed)
}

/// Sample mean, population spread and standard error of `F(o_epr)`.
pub fn empirical_witness(samples: &[HomodyneSample], f: &TestFunction) -> Result<WitnessEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let values: Vec<f64> = samples.iter().map(|s| f.eval(s.o_epr)).collect();
    Ok(estimate_from_values(&values))
}

/// Mean and spread of precomputed `F` values.
pub fn estimate_from_values(values: &[f64]) -> WitnessEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let delta_f = var.sqrt();
    WitnessEstimate {
        mean,
        delta_f,
        delta_e: (n > 1).then(|| delta_f / (n as f64).sqrt()),
        mode: EstimateMode::Empirical,
        samples_used: n,
    }
}

pub fn write_samples_csv<W: Write>(samples: &[HomodyneSample], mut out: W) -> Result<()> {
    writeln!(out, "x1,p2,o_epr")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.x1, s.p2, s.o_epr)?;
    }
    Ok(())
}

/// Reads `x1,p2,o_epr` records (header optional). `o_epr` is recomputed from
/// the quadratures when the column is missing.
pub fn read_samples_csv<R: BufRead>(input: R) -> Result<Vec<HomodyneSample>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if lineno == 0 && line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", lineno + 1, fields[i])))
        };
        let sample = match fields.len() {
            2 => HomodyneSample::new(num(0)?, num(1)?),
            3 => HomodyneSample {
                x1: num(0)?,
                p2: num(1)?,
                o_epr: num(2)?,
            },
            k => {
                return Err(Error::Parse(format!(
                    "line {}: expected 2 or 3 columns, found {k}",
                    lineno + 1
                )))
            }
        };
        out.push(sample);
    }
    Ok(out)
}

/// Exact-mode violations must exceed this to count as detection.
pub const EXACT_VIOLATION_THRESHOLD: f64 = 1e-9;

/// Default significance required in empirical mode.
pub const DEFAULT_SIGNIFICANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `max(mean − F_max, F_min − mean)`.
    pub violation: f64,
    /// `violation / δ_e`, absent when `δ_e` is undefined or zero.
    pub significance: Option<f64>,
    pub entangled: bool,
}

pub fn verdict(est: &WitnessEstimate, bounds: &SeparabilityBounds) -> Result<Verdict> {
    verdict_with_threshold(est, bounds, DEFAULT_SIGNIFICANCE)
}

pub fn verdict_with_threshold(
    est: &WitnessEstimate,
    bounds: &SeparabilityBounds,
    threshold: f64,
) -> Result<Verdict> {
    bounds.require_converged()?;
    let violation = (est.mean - bounds.f_max).max(bounds.f_min - est.mean);
    let significance = est.delta_e.filter(|d| *d > 0.0).map(|d| violation / d);
    let entangled = match est.mode {
        EstimateMode::Exact => violation > EXACT_VIOLATION_THRESHOLD,
        EstimateMode::Empirical => significance.is_some_and(|s| s > threshold),
    };
    Ok(Verdict {
        violation,
        significance,
        entangled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::separability_bounds;
    use crate::catalog::{make_dephased_cat, make_psi_b, make_tmss, CatSpec, TmssOperation, TmssSpec};
    use crate::noise::NoiseStage;
    use std::f64::consts::PI;

    fn vacuum() -> TwoModeState {
        TwoModeState::vacuum(2, 2)
    }

    fn cfg() -> EprMeasurementConfig {
        EprMeasurementConfig::default()
    }

    #[test]
    fn position_matrices_match_direct_integration() {
        let g = position_matrices(0.7, 2, 6);
        let h = 1e-3;
        let xs: Vec<f64> = (-8000..=8000).map(|i| i as f64 * h).collect();
        for (m, n, k) in [(0, 0, 0), (1, 1, 1), (0, 2, 2), (3, 5, 1), (4, 4, 0)] {
            let direct: f64 = xs
                .iter()
                .map(|&x| {
                    let psi = quadrature_wavefunctions(5, x);
                    psi[m] * psi[n] * x.powi(2 * k as i32) * (-1.4 * x * x).exp() * h
                })
                .sum();
            assert!((g[k][(m, n)] - direct).abs() < 1e-10, "{m}{n}{k}");
        }
    }

    #[test]
    fn vacuum_distribution_is_gaussian() {
        let g = joint_quadrature_distribution(&vacuum(), &cfg()).unwrap();
        for (ix, iy) in [(256, 256), (200, 300), (100, 400)] {
            let (x, p) = (g.x.value(ix), g.y.value(iy));
            let want = 2.0 / PI * (-2.0 * x * x - 2.0 * p * p).exp();
            assert!((g.at(ix, iy) - want).abs() < 1e-12);
        }
        assert!((grid_integral(&g, |_, _| 1.0) - 1.0).abs() < 1e-12);
    }

    /// `P(x₁, p₂)` straight from the two-mode wavefunction in `(x_A, x_B)`,
    /// without the Fock-space splitter.
    fn wavefunction_oracle(coeffs: &[(usize, usize, f64)], x1: f64, p2: f64) -> f64 {
        let h = 2e-3;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in -4000..=4000 {
            let x2 = i as f64 * h;
            let (xa, xb) = ((x1 + x2) / 2f64.sqrt(), (x2 - x1) / 2f64.sqrt());
            let pa = quadrature_wavefunctions(4, xa);
            let pb = quadrature_wavefunctions(4, xb);
            let psi: f64 = coeffs.iter().map(|&(m, n, c)| c * pa[m] * pb[n]).sum();
            // ⟨p|x⟩ = e^{−2ipx}/√π with [X, P] = i/2
            acc += Complex64::from_polar(psi * h / PI.sqrt(), -2.0 * p2 * x2);
        }
        acc.norm_sqr()
    }

    #[test]
    fn bell_like_state_matches_wavefunction_oracle() {
        let c = 0.5f64.sqrt();
        let state = make_psi_b(c).unwrap();
        let m = prepare(&state, &cfg()).unwrap();
        let points = [(0.1, -0.3), (0.7, 0.2), (-0.45, 0.9), (1.2, -1.1), (-0.05, 0.05)];
        for (x, p) in points {
            let ax = Axis { min: x, step: 1.0, len: 1 };
            let ap = Axis { min: p, step: 1.0, len: 1 };
            let got = m.distribution_on(ax, ap).values[0];
            let want = wavefunction_oracle(&[(0, 0, c), (1, 1, c)], x, p);
            assert!((got - want).abs() < 1e-9, "({x},{p}): {got} vs {want}");
        }
    }

    #[test]
    fn vacuum_anchors() {
        let f = TestFunction::linear(1.0, 0.0).unwrap();
        let est = exact_expectation(&vacuum(), &f, &cfg()).unwrap();
        assert!((est.mean - 0.5).abs() < 1e-12);
        let e = epr_moments(&vacuum(), 4, &cfg()).unwrap();
        for (m, want) in [1.0, 2.0, 6.0, 24.0].iter().enumerate() {
            assert!((e[m] - want).abs() < 1e-10, "E_{} = {}", m + 1, e[m]);
        }
        for c in [0.5, 1.0, 2.0] {
            let f = TestFunction::linear(c, 0.0).unwrap();
            let est = exact_expectation(&vacuum(), &f, &cfg()).unwrap();
            assert!((est.mean - 1.0 / (1.0 + c)).abs() < 1e-12);
        }
    }

    #[test]
    fn tmss_first_moment() {
        for s in [0.3, 0.5, 1.0] {
            let st = make_tmss(TmssSpec { s, operation: TmssOperation::None }).unwrap();
            let e1 = epr_moments(&st, 1, &cfg()).unwrap()[0];
            assert!((e1 - (-2.0 * s).exp()).abs() < 1e-6, "{s}: {e1}");
        }
    }

    #[test]
    fn fock_trace_matches_grid_average() {
        let st = make_dephased_cat(CatSpec { nu: 0.5, p: 0.3 }).unwrap();
        let c = EprMeasurementConfig::with_phases(0.3, -0.2);
        let m = prepare(&st, &c).unwrap();
        let f = TestFunction::linear(1.3, 2.5).unwrap();
        let g = m.distribution(&c.grid).unwrap();
        let grid_mean = grid_integral(&g, |x, p| f.eval(2.0 * x * x + 2.0 * p * p));
        assert!((m.expectation(&f) - grid_mean).abs() < 1e-8);
    }

    #[test]
    fn phase_covariance_for_symmetric_states() {
        let f = TestFunction::linear(0.9, -1.5).unwrap();
        let st = make_tmss(TmssSpec { s: 0.4, operation: TmssOperation::None }).unwrap();
        let base = exact_expectation(&st, &f, &cfg()).unwrap().mean;
        for phi in [0.3, 1.1, 2.5] {
            let c = EprMeasurementConfig::with_phases(phi, -phi);
            let v = exact_expectation(&st, &f, &c).unwrap().mean;
            assert!((v - base).abs() < 1e-8);
        }
    }

    #[test]
    fn detection_and_channel_noise_agree_for_symmetric_loss() {
        let st = make_dephased_cat(CatSpec { nu: 0.5, p: 0.5 }).unwrap();
        let noise = NoiseSpec::new(0.7, 0.07, NoiseStage::Detection).unwrap();
        let f = TestFunction::linear(0.8, 3.0).unwrap();
        let mut c = cfg();
        c.detection_noise = Some(noise);
        let after = exact_expectation(&st, &f, &c).unwrap().mean;
        let before_state = apply_loss_thermal(&st, &noise, &[Mode::A, Mode::B]).unwrap();
        let before = exact_expectation(&before_state, &f, &cfg()).unwrap().mean;
        assert!((after - before).abs() < 1e-9);
    }

    #[test]
    fn gain_other_than_one_is_rejected() {
        let mut c = cfg();
        c.gain = 2.0;
        let f = TestFunction::power(1).unwrap();
        assert!(exact_expectation(&vacuum(), &f, &c).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut c = cfg();
        c.samples = 10;
        c.seed = 42;
        let a = sample_homodyne(&vacuum(), &c).unwrap();
        let b = sample_homodyne(&vacuum(), &c).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_samples_csv(&a, &mut buf_a).unwrap();
        write_samples_csv(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        c.seed = 43;
        assert_ne!(a, sample_homodyne(&vacuum(), &c).unwrap());
    }

    #[test]
    fn vacuum_sample_statistics() {
        let mut c = cfg();
        c.samples = 100_000;
        c.seed = 7;
        let samples = sample_homodyne(&vacuum(), &c).unwrap();
        let e1 = empirical_witness(&samples, &TestFunction::power(1).unwrap()).unwrap();
        assert!((e1.mean - 1.0).abs() < 4.0 * e1.delta_e.unwrap());
        let f = TestFunction::linear(1.0, 0.0).unwrap();
        let w = empirical_witness(&samples, &f).unwrap();
        assert!((w.mean - 0.5).abs() < 4.0 * w.delta_e.unwrap());
    }

    #[test]
    fn cat_samples_agree_with_exact() {
        let st = make_dephased_cat(CatSpec { nu: 0.5, p: 0.5 }).unwrap();
        let mut c = cfg();
        c.samples = 100_000;
        c.seed = 11;
        let f = TestFunction::linear(0.5, 2.0).unwrap();
        let exact = exact_expectation(&st, &f, &c).unwrap();
        let emp = empirical_witness(&sample_homodyne(&st, &c).unwrap(), &f).unwrap();
        assert!((emp.mean - exact.mean).abs() < 4.0 * emp.delta_e.unwrap());
        assert!((emp.delta_f - exact.delta_f).abs() < 0.05 * exact.delta_f);
    }

    #[test]
    fn empirical_hand_values() {
        let e = estimate_from_values(&[0.7; 5]);
        assert_eq!(e.delta_f, 0.0);
        let e = estimate_from_values(&[0.0, 1.0]);
        assert!((e.mean - 0.5).abs() < 1e-15 && (e.delta_f - 0.5).abs() < 1e-15);
        let e = estimate_from_values(&[0.3]);
        assert!(e.delta_e.is_none());
    }

    #[test]
    fn csv_round_trip() {
        let s = vec![HomodyneSample::new(0.1, -0.25), HomodyneSample::new(1.0 / 3.0, 2e-9)];
        let mut buf = Vec::new();
        write_samples_csv(&s, &mut buf).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), s);
        let two_col = "0.5,0.5\n-0.5,0\n";
        let r = read_samples_csv(two_col.as_bytes()).unwrap();
        assert!((r[0].o_epr - 1.0).abs() < 1e-15);
        assert!(read_samples_csv("1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn verdict_cases() {
        let f = TestFunction::linear(1.0, 0.0).unwrap();
        let b = separability_bounds(&f, 64).unwrap();
        let est = exact_expectation(&vacuum(), &f, &cfg()).unwrap();
        let v = verdict(&est, &b).unwrap();
        assert!(v.violation.abs() < 1e-9 && !v.entangled);
        let tmss = make_tmss(TmssSpec { s: 0.5, operation: TmssOperation::None }).unwrap();
        let est = exact_expectation(&tmss, &f, &cfg()).unwrap();
        assert!(verdict(&est, &b).unwrap().entangled);
        let mut provisional = b.clone();
        provisional.converged = false;
        assert!(verdict(&est, &provisional).is_err());
    }
}
