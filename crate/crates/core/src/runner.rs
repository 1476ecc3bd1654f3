//! Witness optimization, decoherence-time search and figure sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::simon_test;
use crate::bounds::{separability_bounds, SeparabilityBounds, TestFunction};
use crate::catalog::{energy_matched_tmss, make_dephased_cat, make_psi_b, make_tmss, CatSpec, TmssOperation, TmssSpec};
use crate::epr::{
    prepare, verdict, EprMeasurementConfig, EstimateMode, HomodyneSample, MeasuredState,
    QuadratureOperators, WitnessEstimate, EXACT_VIOLATION_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::fock::{Mode, TwoModeState};
use crate::noise::{apply_loss_thermal, NoiseSpec, NoiseStage};

/// Initial bound range; extended automatically until certified.
const BOUND_TERMS: usize = 32;

/// Returned for points whose bounds could not be certified.
const INVALID: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `max(⟨F⟩ − F_max, F_min − ⟨F⟩)`.
    Violation,
    /// Violation in units of `δ_e`.
    Significance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarseGrid {
    pub c: usize,
    pub d: usize,
    pub phi_a: usize,
    pub phi_b: usize,
}

impl Default for CoarseGrid {
    fn default() -> Self {
        CoarseGrid {
            c: 32,
            d: 32,
            phi_a: 8,
            phi_b: 8,
        }
    }
}

/// Search box and settings for [`optimize_witness`].
///
/// `C` lies in `(c_range.0, c_range.1]`; the coarse `C` grid is geometric
/// from `c_range.1 / 200` (or the lower end if larger). Phase ranges are
/// half-open. `degree` is the polynomial order `M` of `F = e^{−Cz}(1 + Dz)`
/// (0 or 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationSpec {
    pub c_range: (f64, f64),
    pub d_range: (f64, f64),
    pub phi_a_range: (f64, f64),
    pub phi_b_range: (f64, f64),
    pub objective: Objective,
    pub grid: CoarseGrid,
    pub tolerance: f64,
    pub degree: u32,
    pub max_iterations: u64,
    /// Whether to finish with a simplex over all four parameters.
    pub refine_phases: bool,
    pub phase_iterations: u64,
    /// Record length `N` used for `δ_e`.
    pub samples: usize,
    /// Noise at the detectors, applied after the splitter.
    pub detection_noise: Option<NoiseSpec>,
}

impl Default for OptimizationSpec {
    fn default() -> Self {
        OptimizationSpec {
            c_range: (0.0, 10.0),
            d_range: (-80.0, 80.0),
            phi_a_range: (0.0, PI),
            phi_b_range: (0.0, PI),
            objective: Objective::Violation,
            grid: CoarseGrid::default(),
            tolerance: 1e-6,
            degree: 1,
            max_iterations: 300,
            refine_phases: true,
            phase_iterations: 80,
            samples: 100_000,
            detection_noise: None,
        }
    }
}

impl OptimizationSpec {
    pub fn validate(&self) -> Result<()> {
        let (c0, c1) = self.c_range;
        if !(c0 >= 0.0 && c1 > c0 && c1.is_finite()) {
            return Err(Error::InvalidParameter(format!("empty C range ({c0}, {c1}]")));
        }
        let (d0, d1) = self.d_range;
        if !(d1 >= d0 && d0.is_finite() && d1.is_finite()) {
            return Err(Error::InvalidParameter(format!("empty D range [{d0}, {d1}]")));
        }
        for (name, (a, b)) in [("φ_A", self.phi_a_range), ("φ_B", self.phi_b_range)] {
            if !(b >= a && a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("empty {name} range [{a}, {b})")));
            }
        }
        let g = self.grid;
        if g.c == 0 || g.phi_a == 0 || g.phi_b == 0 || (self.degree == 1 && g.d == 0) {
            return Err(Error::InvalidParameter("coarse grid sizes must be ≥ 1".into()));
        }
        if self.degree > 1 {
            return Err(Error::InvalidParameter(format!(
                "polynomial degree {} not supported (0 or 1)",
                self.degree
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("refinement tolerance must be > 0".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample count must be ≥ 1".into()));
        }
        if let Some(n) = &self.detection_noise {
            n.validate()?;
        }
        Ok(())
    }

    fn c_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.c_range;
        let start = (hi / 200.0).max(lo).max(1e-3);
        let n = self.grid.c;
        if n == 1 {
            return vec![hi];
        }
        let r = (hi / start).ln() / (n - 1) as f64;
        (0..n).map(|i| start * (r * i as f64).exp()).collect()
    }

    fn d_grid(&self) -> Vec<f64> {
        if self.degree == 0 {
            return vec![0.0];
        }
        let (lo, hi) = self.d_range;
        let n = self.grid.d;
        let mut v: Vec<f64> = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        if lo <= 0.0 && hi >= 0.0 && !v.contains(&0.0) {
            v.push(0.0);
            v.sort_by(f64::total_cmp);
        }
        v
    }

    fn phase_grid(range: (f64, f64), n: usize) -> Vec<f64> {
        (0..n).map(|i| range.0 + (range.1 - range.0) * i as f64 / n as f64).collect()
    }

    fn measurement(&self, phi_a: f64, phi_b: f64) -> EprMeasurementConfig {
        EprMeasurementConfig {
            phi_a,
            phi_b,
            samples: self.samples,
            detection_noise: self.detection_noise,
            ..Default::default()
        }
    }

    fn clamp(&self, p: WitnessPoint) -> WitnessPoint {
        let c_lo = self.c_range.0.max(1e-6);
        WitnessPoint {
            c: p.c.clamp(c_lo, self.c_range.1),
            d: if self.degree == 0 {
                0.0
            } else {
                p.d.clamp(self.d_range.0, self.d_range.1)
            },
            phi_a: p.phi_a.clamp(self.phi_a_range.0, self.phi_a_range.1),
            phi_b: p.phi_b.clamp(self.phi_b_range.0, self.phi_b_range.1),
        }
    }
}

/// Parameters of `F = e^{−Cz}(1 + Dz)` and the measurement phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub c: f64,
    pub d: f64,
    pub phi_a: f64,
    pub phi_b: f64,
}

impl WitnessPoint {
    pub fn test_function(&self) -> Result<TestFunction> {
        if self.d == 0.0 {
            TestFunction::exponential(self.c, vec![])
        } else {
            TestFunction::linear(self.c, self.d)
        }
    }
}

/// Best point found and the verdict there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessOptimum {
    pub point: WitnessPoint,
    pub objective: f64,
    pub violation: f64,
    pub significance: Option<f64>,
    pub mean: f64,
    pub delta_e: Option<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub detected: bool,
    pub mode: EstimateMode,
    pub evaluations: usize,
}

/// Operators for `g_m(C)`, `m ≤ 1`, and `g_m(2C)`, `m ≤ 2`.
struct OperatorPair {
    mean: QuadratureOperators,
    second: QuadratureOperators,
}

impl OperatorPair {
    fn new(c: f64, dim: usize) -> Self {
        OperatorPair {
            mean: QuadratureOperators::new(c, 1, dim),
            second: QuadratureOperators::new(2.0 * c, 2, dim),
        }
    }
}

/// `g_m(C) = ⟨e^{−CÔ} Ô^m⟩` for the mean (`m ≤ 1` at `C`) and the second
/// moment (`m ≤ 2` at `2C`).
#[derive(Debug, Clone, Copy)]
struct LinearMoments {
    g: [f64; 2],
    g2: [f64; 3],
}

impl LinearMoments {
    fn of(measured: &MeasuredState, c: f64) -> Self {
        let (d1, d2) = measured.state().dims();
        let ops = OperatorPair::new(c, d1.max(d2));
        Self::with(measured, &ops)
    }

    fn with(measured: &MeasuredState, ops: &OperatorPair) -> Self {
        let a = measured.basis_expectations_with(&ops.mean);
        let b = measured.basis_expectations_with(&ops.second);
        LinearMoments {
            g: [a[0], a[1]],
            g2: [b[0], b[1], b[2]],
        }
    }

    fn estimate(&self, d: f64, samples: usize) -> WitnessEstimate {
        let mean = self.g[0] + d * self.g[1];
        let second = self.g2[0] + 2.0 * d * self.g2[1] + d * d * self.g2[2];
        let delta_f = (second - mean * mean).max(0.0).sqrt();
        WitnessEstimate {
            mean,
            delta_f,
            delta_e: Some(delta_f / (samples as f64).sqrt()),
            mode: EstimateMode::Exact,
            samples_used: samples,
        }
    }
}

fn bounds_for(c: f64, d: f64) -> Option<SeparabilityBounds> {
    let f = if d == 0.0 {
        TestFunction::exponential(c, vec![])
    } else {
        TestFunction::linear(c, d)
    };
    let b = separability_bounds(&f.ok()?, BOUND_TERMS).ok()?;
    b.converged.then_some(b)
}

fn score(objective: Objective, est: &WitnessEstimate, b: &SeparabilityBounds) -> f64 {
    let violation = (est.mean - b.f_max).max(b.f_min - est.mean);
    match objective {
        Objective::Violation => violation,
        Objective::Significance => match est.delta_e {
            Some(de) if de > 0.0 => violation / de,
            _ => INVALID,
        },
    }
}

fn finish(
    point: WitnessPoint,
    est: WitnessEstimate,
    b: &SeparabilityBounds,
    objective: Objective,
    evaluations: usize,
) -> Result<WitnessOptimum> {
    let v = verdict(&est, b)?;
    Ok(WitnessOptimum {
        point,
        objective: score(objective, &est, b),
        violation: v.violation,
        significance: v.significance,
        mean: est.mean,
        delta_e: est.delta_e,
        f_min: b.f_min,
        f_max: b.f_max,
        detected: match est.mode {
            EstimateMode::Exact => v.violation > EXACT_VIOLATION_THRESHOLD,
            EstimateMode::Empirical => v.entangled,
        },
        mode: est.mode,
        evaluations,
    })
}

/// All four parameters free; every evaluation re-prepares the state.
struct ExactProblem<'a> {
    state: &'a TwoModeState,
    spec: &'a OptimizationSpec,
}

impl ExactProblem<'_> {
    fn unpack(&self, p: &[f64]) -> WitnessPoint {
        self.spec.clamp(WitnessPoint { c: p[0], d: p[1], phi_a: p[2], phi_b: p[3] })
    }

    fn evaluate(&self, w: &WitnessPoint) -> Option<(WitnessEstimate, SeparabilityBounds)> {
        let measured = prepare(self.state, &self.spec.measurement(w.phi_a, w.phi_b)).ok()?;
        let est = LinearMoments::of(&measured, w.c).estimate(w.d, self.spec.samples);
        Some((est, bounds_for(w.c, w.d)?))
    }
}

impl CostFunction for ExactProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let w = self.unpack(p);
        Ok(match self.evaluate(&w) {
            Some((est, b)) => penalty(-score(self.spec.objective, &est, &b)),
            None => penalty(f64::INFINITY),
        })
    }
}

/// `(C, D)` free at fixed phases.
struct FixedPhaseProblem<'a> {
    measured: &'a MeasuredState,
    spec: &'a OptimizationSpec,
    phases: (f64, f64),
}

impl FixedPhaseProblem<'_> {
    fn unpack(&self, p: &[f64]) -> WitnessPoint {
        let d = if self.spec.degree == 1 { p[1] } else { 0.0 };
        self.spec.clamp(WitnessPoint { c: p[0], d, phi_a: self.phases.0, phi_b: self.phases.1 })
    }
}

impl CostFunction for FixedPhaseProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let w = self.unpack(p);
        let Some(b) = bounds_for(w.c, w.d) else {
            return Ok(penalty(f64::INFINITY));
        };
        let est = LinearMoments::of(self.measured, w.c).estimate(w.d, self.spec.samples);
        Ok(penalty(-score(self.spec.objective, &est, &b)))
    }
}

/// Keeps the simplex arithmetic finite at uncertified points.
fn penalty(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        1e6
    }
}

fn simplex(start: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![start.to_vec()];
    for (i, s) in steps.iter().enumerate() {
        let mut v = start.to_vec();
        v[i] += s;
        out.push(v);
    }
    out
}

/// Nelder–Mead from `start`; returns the best vertex and its cost.
fn refine<P>(problem: P, start: Vec<f64>, steps: &[f64], tol: f64, iters: u64) -> (Vec<f64>, f64)
where
    P: CostFunction<Param = Vec<f64>, Output = f64>,
{
    let Ok(solver) = NelderMead::new(simplex(&start, steps)).with_sd_tolerance(tol) else {
        return (start, f64::INFINITY);
    };
    match Executor::new(problem, solver).configure(|s| s.max_iters(iters)).run() {
        Ok(res) => {
            let st = res.state();
            match st.get_best_param() {
                Some(p) => (p.clone(), st.get_best_cost()),
                None => (start, f64::INFINITY),
            }
        }
        Err(_) => (start, f64::INFINITY),
    }
}

fn step_sizes(spec: &OptimizationSpec, c: f64) -> (f64, f64) {
    ((0.2 * c).max(0.02), 0.05 * (spec.d_range.1 - spec.d_range.0).max(1e-3))
}

/// Coarse scan over `(C, D, φ_A, φ_B)` followed by simplex refinement,
/// first of `(C, D)` at the best phases and then of all four parameters.
///
/// For `degree = 1` the `M = 0` optimum is found first and seeds the
/// refinement, so the reported optimum never falls below the `D = 0` one.
pub fn optimize_witness(state: &TwoModeState, spec: &OptimizationSpec) -> Result<WitnessOptimum> {
    spec.validate()?;
    let base = optimize_degree(state, &OptimizationSpec { degree: 0, ..spec.clone() }, None)?;
    if spec.degree == 0 {
        return Ok(base);
    }
    let best = optimize_degree(state, spec, Some(base.point))?;
    Ok(if best.objective >= base.objective { best } else { base })
}

fn optimize_degree(
    state: &TwoModeState,
    spec: &OptimizationSpec,
    seed: Option<WitnessPoint>,
) -> Result<WitnessOptimum> {
    let cs = spec.c_grid();
    let ds = spec.d_grid();
    let pas = OptimizationSpec::phase_grid(spec.phi_a_range, spec.grid.phi_a);
    let pbs = OptimizationSpec::phase_grid(spec.phi_b_range, spec.grid.phi_b);
    let phases: Vec<(f64, f64)> = pas.iter().flat_map(|&a| pbs.iter().map(move |&b| (a, b))).collect();

    let measured: Vec<MeasuredState> = phases
        .par_iter()
        .map(|&(a, b)| prepare(state, &spec.measurement(a, b)))
        .collect::<Result<_>>()?;
    let dim = measured
        .iter()
        .map(|m| {
            let (a, b) = m.state().dims();
            a.max(b)
        })
        .max()
        .unwrap_or(1);

    // Ordered per-C maxima keep the result independent of scheduling.
    let per_c: Vec<(f64, WitnessPoint)> = cs
        .par_iter()
        .map(|&c| {
            let ops = OperatorPair::new(c, dim);
            let bounds: Vec<Option<SeparabilityBounds>> = ds.iter().map(|&d| bounds_for(c, d)).collect();
            let mut best = (INVALID, WitnessPoint { c, d: 0.0, phi_a: phases[0].0, phi_b: phases[0].1 });
            for (m, &(phi_a, phi_b)) in measured.iter().zip(&phases) {
                let lm = LinearMoments::with(m, &ops);
                for (b, &d) in bounds.iter().zip(&ds) {
                    let Some(b) = b else { continue };
                    let s = score(spec.objective, &lm.estimate(d, spec.samples), b);
                    if s > best.0 {
                        best = (s, WitnessPoint { c, d, phi_a, phi_b });
                    }
                }
            }
            best
        })
        .collect();
    let (grid_score, grid_point) = per_c
        .into_iter()
        .fold((INVALID, None), |acc, (s, p)| if s > acc.0 { (s, Some(p)) } else { acc });
    let mut evaluations = phases.len() * cs.len() * ds.len();

    let full = ExactProblem { state, spec };
    let score_at = |w: &WitnessPoint| full.evaluate(w).map(|(e, b)| score(spec.objective, &e, &b));
    let mut start = grid_point;
    if let Some(p) = seed {
        if score_at(&p).is_some_and(|s| s >= grid_score) {
            start = Some(p);
        }
    }
    let Some(start) = start else {
        return Err(Error::InvalidParameter(
            "no point of the search box has certified separability bounds".into(),
        ));
    };

    let mut candidates = vec![start];
    let at_start = prepare(state, &spec.measurement(start.phi_a, start.phi_b))?;
    let fixed = FixedPhaseProblem { measured: &at_start, spec, phases: (start.phi_a, start.phi_b) };
    let (dc, dd) = step_sizes(spec, start.c);
    let (x0, steps) = if spec.degree == 1 {
        (vec![start.c, start.d], vec![dc, dd])
    } else {
        (vec![start.c], vec![dc])
    };
    let (p, _) = refine(fixed, x0, &steps, spec.tolerance, spec.max_iterations);
    let stage1 = FixedPhaseProblem { measured: &at_start, spec, phases: (start.phi_a, start.phi_b) }.unpack(&p);
    candidates.push(stage1);
    evaluations += spec.max_iterations as usize;

    if spec.refine_phases && spec.phase_iterations > 0 {
        let (dc, dd) = step_sizes(spec, stage1.c);
        let dd = if spec.degree == 1 { dd } else { 0.0 };
        let x0 = vec![stage1.c, stage1.d, stage1.phi_a, stage1.phi_b];
        let steps = if spec.degree == 1 { vec![dc, dd, 0.1, 0.1] } else { vec![dc, 1e-9, 0.1, 0.1] };
        let (p, _) = refine(ExactProblem { state, spec }, x0, &steps, spec.tolerance, spec.phase_iterations);
        candidates.push(full.unpack(&p));
        evaluations += spec.phase_iterations as usize;
    }

    let mut chosen: Option<(f64, WitnessPoint, WitnessEstimate, SeparabilityBounds)> = None;
    for w in candidates {
        if let Some((e, b)) = full.evaluate(&w) {
            let s = score(spec.objective, &e, &b);
            if chosen.as_ref().is_none_or(|c| s > c.0) {
                chosen = Some((s, w, e, b));
            }
        }
    }
    match chosen {
        Some((_, w, est, b)) => finish(w, est, &b, spec.objective, evaluations),
        None => Err(Error::InvalidParameter(
            "no point of the search box has certified separability bounds".into(),
        )),
    }
}

/// Prefix sums of `e^{−kCo} o^j` over a fixed record.
struct EmpiricalProblem<'a> {
    samples: &'a [HomodyneSample],
    spec: &'a OptimizationSpec,
    free_d: bool,
}

impl EmpiricalProblem<'_> {
    fn estimate(&self, c: f64, d: f64) -> WitnessEstimate {
        let n = self.samples.len() as f64;
        let (mut s0, mut s1, mut q0, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in self.samples {
            let o = s.o_epr;
            let e = (-c * o).exp();
            s0 += e;
            s1 += e * o;
            let e2 = e * e;
            q0 += e2;
            q1 += e2 * o;
            q2 += e2 * o * o;
        }
        let mean = (s0 + d * s1) / n;
        let second = (q0 + 2.0 * d * q1 + d * d * q2) / n;
        let delta_f = (second - mean * mean).max(0.0).sqrt();
        WitnessEstimate {
            mean,
            delta_f,
            delta_e: (n > 1.0).then(|| delta_f / n.sqrt()),
            mode: EstimateMode::Empirical,
            samples_used: self.samples.len(),
        }
    }

    fn point(&self, p: &[f64]) -> WitnessPoint {
        self.spec.clamp(WitnessPoint {
            c: p[0],
            d: if self.free_d { p[1] } else { 0.0 },
            phi_a: 0.0,
            phi_b: 0.0,
        })
    }
}

impl CostFunction for EmpiricalProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let w = self.point(p);
        let Some(b) = bounds_for(w.c, w.d) else {
            return Ok(penalty(f64::INFINITY));
        };
        Ok(penalty(-score(self.spec.objective, &self.estimate(w.c, w.d), &b)))
    }
}

/// Optimizes `(C, D)` over one recorded sample set; the phases are those the
/// record was taken at and are passed through for reporting.
pub fn optimize_empirical(
    samples: &[HomodyneSample],
    phases: (f64, f64),
    spec: &OptimizationSpec,
) -> Result<WitnessOptimum> {
    spec.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidParameter("empirical optimization needs ≥ 2 samples".into()));
    }
    let one = |degree: u32, seed: Option<WitnessPoint>| -> Result<WitnessOptimum> {
        let sub = OptimizationSpec { degree, ..spec.clone() };
        let problem = EmpiricalProblem { samples, spec: &sub, free_d: degree == 1 };
        let cs = sub.c_grid();
        let ds = sub.d_grid();
        let grid: Vec<(f64, f64, f64)> = cs
            .par_iter()
            .flat_map_iter(|&c| ds.iter().map(move |&d| (c, d)))
            .map(|(c, d)| match bounds_for(c, d) {
                Some(b) => (score(sub.objective, &problem.estimate(c, d), &b), c, d),
                None => (INVALID, c, d),
            })
            .collect();
        let mut best = grid.iter().copied().fold((INVALID, cs[0], 0.0), |a, b| if b.0 > a.0 { b } else { a });
        if let Some(p) = seed {
            if let Some(b) = bounds_for(p.c, p.d) {
                let s = score(sub.objective, &problem.estimate(p.c, p.d), &b);
                if s >= best.0 {
                    best = (s, p.c, p.d);
                }
            }
        }
        let start = if problem.free_d { vec![best.1, best.2] } else { vec![best.1] };
        let steps: Vec<f64> = if problem.free_d {
            vec![(0.2 * best.1).max(0.02), 0.05 * (sub.d_range.1 - sub.d_range.0).max(1e-3)]
        } else {
            vec![(0.2 * best.1).max(0.02)]
        };
        let (p, cost) = refine(
            EmpiricalProblem { samples, spec: &sub, free_d: problem.free_d },
            start,
            &steps,
            sub.tolerance,
            sub.max_iterations,
        );
        let mut w = problem.point(&p);
        if !(-cost > best.0) {
            w = WitnessPoint { c: best.1, d: best.2, phi_a: 0.0, phi_b: 0.0 };
        }
        let b = bounds_for(w.c, w.d).ok_or_else(|| {
            Error::InvalidParameter("no point of the search box has certified separability bounds".into())
        })?;
        let est = problem.estimate(w.c, w.d);
        let w = WitnessPoint { phi_a: phases.0, phi_b: phases.1, ..w };
        finish(w, est, &b, sub.objective, grid.len() + sub.max_iterations as usize)
    };
    let base = one(0, None)?;
    if spec.degree == 0 {
        return Ok(base);
    }
    let best = one(1, Some(base.point))?;
    Ok(if best.objective >= base.objective { best } else { base })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Ours,
    Simon,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Criterion::Ours),
            "simon" => Ok(Criterion::Simon),
            other => Err(Error::Parse(format!("unknown criterion '{other}' (ours|simon)"))),
        }
    }
}

/// Settings for [`detection_time`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionTimeSpec {
    /// Bisection stops once the bracket on `t` is this narrow.
    pub resolution: f64,
    /// Search ceiling; states still detected there report `t_max`.
    pub t_max: f64,
    pub optimization: OptimizationSpec,
}

impl Default for DetectionTimeSpec {
    fn default() -> Self {
        DetectionTimeSpec {
            resolution: 1e-3,
            t_max: 8.0,
            optimization: OptimizationSpec::default(),
        }
    }
}

fn detected_under(criterion: Criterion, state: &TwoModeState, spec: &OptimizationSpec) -> Result<bool> {
    match criterion {
        Criterion::Simon => Ok(simon_test(state)?.entangled),
        Criterion::Ours => match optimize_witness(state, spec) {
            Ok(o) => Ok(o.detected),
            Err(Error::InvalidParameter(m)) if m.starts_with("no point") => Ok(false),
            Err(e) => Err(e),
        },
    }
}

fn decohered(state: &TwoModeState, n_th: f64, t: f64) -> Result<TwoModeState> {
    let spec = NoiseSpec::new((-t).exp(), n_th, NoiseStage::Channel)?;
    apply_loss_thermal(state, &spec, &[Mode::A, Mode::B])
}

/// Largest `t = log η⁻¹` at which `criterion` still detects entanglement
/// after both modes pass the thermal attenuator `(e^{−t}, n_th)`.
pub fn detection_time(
    state: &TwoModeState,
    n_th: f64,
    criterion: Criterion,
    spec: &DetectionTimeSpec,
) -> Result<f64> {
    if !(spec.resolution > 0.0 && spec.t_max > 0.0) {
        return Err(Error::InvalidParameter("resolution and t_max must be > 0".into()));
    }
    let detect = |t: f64| -> Result<bool> {
        let s = if t == 0.0 { state.clone() } else { decohered(state, n_th, t)? };
        detected_under(criterion, &s, &spec.optimization)
    };
    if !detect(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 0.25f64.min(spec.t_max));
    while detect(hi)? {
        lo = hi;
        if hi >= spec.t_max {
            return Ok(spec.t_max);
        }
        hi = (2.0 * hi).min(spec.t_max);
    }
    while hi - lo > spec.resolution {
        let mid = 0.5 * (lo + hi);
        if detect(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Figure {
    #[serde(rename = "1b")]
    F1b,
    #[serde(rename = "1c")]
    F1c,
    #[serde(rename = "1d")]
    F1d,
    #[serde(rename = "2a")]
    F2a,
    #[serde(rename = "2b")]
    F2b,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1b" => Ok(Figure::F1b),
            "1c" => Ok(Figure::F1c),
            "1d" => Ok(Figure::F1d),
            "2a" => Ok(Figure::F2a),
            "2b" => Ok(Figure::F2b),
            other => Err(Error::Parse(format!("unknown figure '{other}' (1b|1c|1d|2a|2b)"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::F1b => "1b",
            Figure::F1c => "1c",
            Figure::F1d => "1d",
            Figure::F2a => "2a",
            Figure::F2b => "2b",
        })
    }
}

/// Sweep parameters. Unset fields take per-figure defaults from
/// [`SweepConfig::for_figure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Primary axis: `ν` (1b, 1c), `c₀` (1d, 2a) or `s` (2b).
    pub axis: Vec<f64>,
    /// Secondary axis for 1b: `η`.
    pub second_axis: Vec<f64>,
    /// Cat coherence `p` (1b, 1c).
    pub p: f64,
    /// Overall efficiency (1c, 1d).
    pub eta: f64,
    pub n_th: f64,
    pub samples: usize,
    pub seed: u64,
    pub optimization: OptimizationSpec,
    pub detection: DetectionTimeSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::for_figure(Figure::F1b)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl SweepConfig {
    pub fn for_figure(figure: Figure) -> Self {
        let base = SweepConfig {
            axis: vec![],
            second_axis: vec![],
            p: 0.3,
            eta: 1.0,
            n_th: 0.0,
            samples: 100_000,
            seed: 0,
            optimization: OptimizationSpec::default(),
            detection: DetectionTimeSpec::default(),
        };
        match figure {
            Figure::F1b => SweepConfig {
                axis: linspace(0.2, 1.6, 8),
                second_axis: linspace(0.5, 1.0, 6),
                ..base
            },
            Figure::F1c => SweepConfig {
                axis: linspace(0.2, 1.6, 8),
                p: 0.5,
                eta: 0.7,
                n_th: 0.07,
                ..base
            },
            Figure::F1d => SweepConfig {
                axis: linspace(0.1, 0.9, 9),
                eta: 0.7,
                n_th: 0.07,
                optimization: OptimizationSpec {
                    objective: Objective::Significance,
                    ..OptimizationSpec::default()
                },
                ..base
            },
            Figure::F2a => SweepConfig {
                axis: linspace(0.1, 0.9, 9),
                n_th: 0.5,
                ..base
            },
            Figure::F2b => SweepConfig {
                axis: linspace(0.1, 1.0, 10),
                n_th: 0.05,
                ..base
            },
        }
    }

    pub fn validate(&self, figure: Figure) -> Result<()> {
        if self.axis.is_empty() {
            return Err(Error::InvalidParameter("sweep axis is empty".into()));
        }
        let monotone = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !monotone(&self.axis) || !monotone(&self.second_axis) {
            return Err(Error::InvalidParameter("sweep axes must be strictly increasing".into()));
        }
        if figure == Figure::F1b && self.second_axis.is_empty() {
            return Err(Error::InvalidParameter("figure 1b needs a second (η) axis".into()));
        }
        if matches!(figure, Figure::F1d | Figure::F2a) && self.axis.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return Err(Error::InvalidParameter("c₀ values must lie in (0, 1)".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidParameter("sample count must be ≥ 2".into()));
        }
        self.optimization.validate()
    }

    fn noise(&self, eta: f64) -> Result<Option<NoiseSpec>> {
        let n = NoiseSpec::new(eta, self.n_th, NoiseStage::Detection)?;
        Ok((!n.is_identity()).then_some(n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: Vec<f64>,
    pub series: String,
    pub objective: f64,
    pub error: Option<f64>,
    pub point: Option<WitnessPoint>,
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub figure: Figure,
    pub axis_names: Vec<String>,
    pub objective_name: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<&str> = self.axis_names.iter().map(String::as_str).collect();
        header.extend(["series", self.objective_name.as_str(), "error", "c", "d", "phi_a", "phi_b", "detected"]);
        writeln!(out, "{}", header.join(","))?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        for r in &self.rows {
            let mut cells: Vec<String> = r.axis.iter().map(|v| format!("{v}")).collect();
            cells.push(r.series.clone());
            cells.push(format!("{:.10e}", r.objective));
            cells.push(opt(r.error));
            cells.push(opt(r.point.map(|p| p.c)));
            cells.push(opt(r.point.map(|p| p.d)));
            cells.push(opt(r.point.map(|p| p.phi_a)));
            cells.push(opt(r.point.map(|p| p.phi_b)));
            cells.push(r.detected.to_string());
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn row(axis: Vec<f64>, series: &str, o: &WitnessOptimum, error: Option<f64>) -> SweepRow {
    SweepRow {
        axis,
        series: series.to_string(),
        objective: o.objective,
        error,
        point: Some(o.point),
        detected: o.detected,
    }
}

/// Exact optimum for the phases, then `N` samples at those phases and a
/// second optimization of `(C, D)` over that record.
fn empirical_at(state: &TwoModeState, cfg: &SweepConfig, spec: &OptimizationSpec, seed: u64) -> Result<WitnessOptimum> {
    let exact = optimize_witness(state, spec)?;
    let mut mcfg = spec.measurement(exact.point.phi_a, exact.point.phi_b);
    mcfg.samples = cfg.samples;
    mcfg.seed = seed;
    let samples = crate::epr::sample_homodyne(state, &mcfg)?;
    optimize_empirical(&samples, (exact.point.phi_a, exact.point.phi_b), spec)
}

fn point_seed(seed: u64, i: usize) -> u64 {
    crate::epr::shard_seed(seed ^ 0x5eed_f16_u64, i as u64)
}

/// Data table for one figure.
pub fn figure_sweep(figure: Figure, cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate(figure)?;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (axis_names, objective_name, rows): (Vec<String>, &str, Vec<SweepRow>) = match figure {
        Figure::F1b => {
            let pts: Vec<(f64, f64)> = cfg
                .axis
                .iter()
                .flat_map(|&nu| cfg.second_axis.iter().map(move |&eta| (nu, eta)))
                .collect();
            let rows = pts
                .iter()
                .map(|&(nu, eta)| {
                    let st = make_dephased_cat(CatSpec { nu, p: cfg.p })?;
                    let spec = OptimizationSpec {
                        objective: Objective::Violation,
                        detection_noise: cfg.noise(eta)?,
                        ..cfg.optimization.clone()
                    };
                    let o = optimize_witness(&st, &spec)?;
                    Ok(row(vec![nu, eta], "linear", &o, None))
                })
                .collect::<Result<Vec<_>>>()?;
            (names(&["nu", "eta"]), "violation", rows)
        }
        Figure::F1c => {
            let spec = OptimizationSpec {
                objective: Objective::Violation,
                detection_noise: cfg.noise(cfg.eta)?,
                samples: cfg.samples,
                ..cfg.optimization.clone()
            };
            let rows = cfg
                .axis
                .iter()
                .enumerate()
                .map(|(i, &nu)| {
                    let st = make_dephased_cat(CatSpec { nu, p: cfg.p })?;
                    let o = empirical_at(&st, cfg, &spec, point_seed(cfg.seed, i))?;
                    Ok(row(vec![nu], "linear", &o, o.delta_e))
                })
                .collect::<Result<Vec<_>>>()?;
            (names(&["nu"]), "violation", rows)
        }
        Figure::F1d => {
            let spec = OptimizationSpec {
                objective: Objective::Significance,
                detection_noise: cfg.noise(cfg.eta)?,
                samples: cfg.samples,
                ..cfg.optimization.clone()
            };
            let mut rows = Vec::new();
            for (i, &c0) in cfg.axis.iter().enumerate() {
                let st = make_psi_b(c0)?;
                let exact = optimize_witness(&st, &spec)?;
                let (pa, pb) = (exact.point.phi_a, exact.point.phi_b);
                let mut mcfg = spec.measurement(pa, pb);
                mcfg.samples = cfg.samples;
                mcfg.seed = point_seed(cfg.seed, i);
                let samples = crate::epr::sample_homodyne(&st, &mcfg)?;
                let m0 = optimize_empirical(&samples, (pa, pb), &OptimizationSpec { degree: 0, ..spec.clone() })?;
                let m1 = optimize_empirical(&samples, (pa, pb), &OptimizationSpec { degree: 1, ..spec.clone() })?;
                rows.push(row(vec![c0], "exponential", &m0, None));
                rows.push(row(vec![c0], "linear", &m1, None));
            }
            (names(&["c0"]), "significance", rows)
        }
        Figure::F2a => {
            let lin = cfg.detection.clone();
            let exp = DetectionTimeSpec {
                optimization: OptimizationSpec { degree: 0, ..lin.optimization.clone() },
                ..lin.clone()
            };
            let mut rows = Vec::new();
            for &c0 in &cfg.axis {
                let st = make_psi_b(c0)?;
                for (series, crit, spec) in [
                    ("linear", Criterion::Ours, &lin),
                    ("exponential", Criterion::Ours, &exp),
                    ("simon", Criterion::Simon, &lin),
                ] {
                    let t = detection_time(&st, cfg.n_th, crit, spec)?;
                    rows.push(time_row(vec![c0], series, t));
                }
            }
            (names(&["c0"]), "detection_time", rows)
        }
        Figure::F2b => {
            let mut rows = Vec::new();
            for &s in &cfg.axis {
                let sub = make_tmss(TmssSpec { s, operation: TmssOperation::SubtractBoth })?;
                let gauss = make_tmss(energy_matched_tmss(&sub))?;
                let spec = &cfg.detection;
                rows.push(time_row(vec![s], "linear", detection_time(&sub, cfg.n_th, Criterion::Ours, spec)?));
                rows.push(time_row(vec![s], "simon", detection_time(&sub, cfg.n_th, Criterion::Simon, spec)?));
                rows.push(time_row(
                    vec![s],
                    "simon_gaussian",
                    detection_time(&gauss, cfg.n_th, Criterion::Simon, spec)?,
                ));
            }
            (names(&["s"]), "detection_time", rows)
        }
    };
    Ok(SweepResult {
        figure,
        axis_names,
        objective_name: objective_name.to_string(),
        seed: cfg.seed,
        rows,
    })
}

fn time_row(axis: Vec<f64>, series: &str, t: f64) -> SweepRow {
    SweepRow {
        axis,
        series: series.to_string(),
        objective: t,
        error: None,
        point: None,
        detected: t > 0.0,
    }
}
