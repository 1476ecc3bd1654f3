//! Displacement operators and characteristic functions.
//!
//! `D(λ) = exp(λ a† − λ* a)` and `C(λ) = Tr[ρ D(λ)]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{TwoModeState, C0};
use crate::error::{Error, Result};
use crate::special::{assoc_laguerre, laguerre, ln_factorial};

/// `⟨n|D(λ)|n⟩ = e^{−|λ|²/2} L_n(|λ|²)`.
pub fn displacement_diagonal(n: usize, lambda: Complex64) -> f64 {
    let x = lambda.norm_sqr();
    (-0.5 * x).exp() * laguerre(n, x)
}

/// Truncated matrix of `D(λ)` on levels `0..d`.
pub fn displacement_matrix(lambda: Complex64, d: usize) -> DMatrix<Complex64> {
    let x = lambda.norm_sqr();
    if x == 0.0 {
        return DMatrix::identity(d, d);
    }
    let r = lambda.norm();
    let unit = lambda / r;
    let ln_r = r.ln();
    DMatrix::from_fn(d, d, |m, n| {
        if m >= n {
            let k = m - n;
            let mag = (0.5 * (ln_factorial(n) - ln_factorial(m)) + k as f64 * ln_r - 0.5 * x).exp();
            unit.powi(k as i32) * (mag * assoc_laguerre(n, k as f64, x))
        } else {
            let k = n - m;
            let mag = (0.5 * (ln_factorial(m) - ln_factorial(n)) + k as f64 * ln_r - 0.5 * x).exp();
            (-unit.conj()).powi(k as i32) * (mag * assoc_laguerre(m, k as f64, x))
        }
    })
}

/// `Tr[ρ D(λ_A) ⊗ D(λ_B)]`.
pub fn characteristic(state: &TwoModeState, lambda_a: Complex64, lambda_b: Complex64) -> Complex64 {
    let da = displacement_matrix(lambda_a, state.dim_a());
    let db = displacement_matrix(lambda_b, state.dim_b());
    state.expect_local(&da, &db)
}

/// Uniform axis `min + i·step` for `i in 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    /// `len` points spanning `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, len: usize) -> Self {
        assert!(len >= 2);
        Axis {
            min: -half_width,
            step: 2.0 * half_width / (len - 1) as f64,
            len,
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn max(&self) -> f64 {
        self.value(self.len - 1)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.value(i))
    }
}

/// Values sampled on a 2D rectangular grid, row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid<T> {
    pub x: Axis,
    pub y: Axis,
    pub values: Vec<T>,
}

impl<T: Copy> PhaseSpaceGrid<T> {
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[ix * self.y.len + iy]
    }

    pub fn from_fn(x: Axis, y: Axis, f: impl Fn(f64, f64) -> T + Sync) -> Self
    where
        T: Send,
    {
        let values = (0..x.len * y.len)
            .into_par_iter()
            .map(|k| f(x.value(k / y.len), y.value(k % y.len)))
            .collect();
        PhaseSpaceGrid { x, y, values }
    }

    pub fn same_axes<U>(&self, other: &PhaseSpaceGrid<U>) -> bool {
        self.x == other.x && self.y == other.y
    }
}

/// Which two-mode displacement the grid point `λ = x + iy` selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharSlice {
    /// `C(λ, 0)`.
    ModeA,
    /// `C(0, λ)`.
    ModeB,
    /// `C(λ*, λ)`, the combination entering the teleportation map.
    Epr,
}

/// Characteristic function on a λ grid.
///
/// The grid must be symmetric about the origin with the origin on a node;
/// `C(0) = 1` and `C(−λ) = C(λ)*` are checked.
pub fn characteristic_function(
    state: &TwoModeState,
    x: Axis,
    y: Axis,
    slice: CharSlice,
) -> Result<PhaseSpaceGrid<Complex64>> {
    let grid = PhaseSpaceGrid::from_fn(x, y, |lx, ly| {
        let l = Complex64::new(lx, ly);
        match slice {
            CharSlice::ModeA => characteristic(state, l, C0),
            CharSlice::ModeB => characteristic(state, C0, l),
            CharSlice::Epr => characteristic(state, l.conj(), l),
        }
    });
    check_characteristic(&grid, state.trace())?;
    Ok(grid)
}

fn check_characteristic(grid: &PhaseSpaceGrid<Complex64>, trace: f64) -> Result<()> {
    let (nx, ny) = (grid.x.len, grid.y.len);
    let sym_x = (grid.x.min + grid.x.max()).abs() < 1e-12 * grid.x.step.abs().max(1.0);
    let sym_y = (grid.y.min + grid.y.max()).abs() < 1e-12 * grid.y.step.abs().max(1.0);
    if !(sym_x && sym_y && nx % 2 == 1 && ny % 2 == 1) {
        return Err(Error::Grid(
            "characteristic grid must be symmetric with an odd number of points".into(),
        ));
    }
    let origin = grid.at(nx / 2, ny / 2);
    if (origin - Complex64::new(trace, 0.0)).norm() > 1e-10 {
        return Err(Error::Grid(format!("C(0) = {origin} differs from Tr ρ = {trace}")));
    }
    for ix in 0..nx {
        for iy in 0..ny {
            let a = grid.at(ix, iy);
            let b = grid.at(nx - 1 - ix, ny - 1 - iy);
            if (a - b.conj()).norm() > 1e-8 {
                return Err(Error::Grid(format!(
                    "C(−λ) ≠ C(λ)* at ({}, {})",
                    grid.x.value(ix),
                    grid.y.value(iy)
                )));
            }
        }
    }
    Ok(())
}
