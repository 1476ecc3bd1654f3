//! Plain-text state files.
//!
//! ```text
//! # cvwitness two-mode state
//! convention x=(a+a^dag)/2;vacuum_var=0.25
//! dims <dim_a> <dim_b>
//! <re> <im>        one line per matrix entry, row-major
//! ```
//!
//! Entries are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::TwoModeState;
use crate::convention::CONVENTION_TAG;
use crate::error::{Error, Result};

const MAGIC: &str = "# cvwitness two-mode state";

pub fn write_state<W: Write>(state: &TwoModeState, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "convention {CONVENTION_TAG}")?;
    writeln!(out, "dims {} {}", state.dim_a(), state.dim_b())?;
    let m = state.matrix();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            writeln!(out, "{:.16e} {:.16e}", z.re, z.im)?;
        }
    }
    Ok(())
}

pub fn read_state<R: BufRead>(input: R) -> Result<TwoModeState> {
    let mut lines = input
        .lines()
        .map(|l| l.map_err(Error::from))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .unwrap_or_else(|| Err(Error::Parse(format!("unexpected end of file, expected {what}"))))
    };

    if next("header")?.trim() != MAGIC {
        return Err(Error::Parse("missing state file header".into()));
    }
    let conv = next("convention line")?;
    match conv.trim().strip_prefix("convention ") {
        Some(tag) if tag == CONVENTION_TAG => {}
        Some(tag) => {
            return Err(Error::Parse(format!(
                "convention `{tag}` does not match `{CONVENTION_TAG}`"
            )))
        }
        None => return Err(Error::Parse("missing convention line".into())),
    }
    let dims = next("dims line")?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let (dim_a, dim_b) = match parts.as_slice() {
        ["dims", a, b] => (parse_dim(a)?, parse_dim(b)?),
        _ => return Err(Error::Parse(format!("bad dims line `{dims}`"))),
    };

    let n = dim_a * dim_b;
    let mut data = Vec::with_capacity(n * n);
    for k in 0..n * n {
        let line = next("matrix entry")?;
        let mut it = line.split_whitespace();
        let mut num = || -> Result<f64> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("entry {k}: expected two numbers")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("entry {k}: {e}")))
        };
        let re = num()?;
        let im = num()?;
        data.push(Complex64::new(re, im));
    }
    if let Some(extra) = lines.next() {
        return Err(Error::Parse(format!("trailing content: `{}`", extra?)));
    }
    TwoModeState::from_matrix(dim_a, dim_b, DMatrix::from_row_slice(n, n, &data))
}

fn parse_dim(s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(d) if d > 0 => Ok(d),
        _ => Err(Error::Parse(format!("invalid dimension `{s}`"))),
    }
}
