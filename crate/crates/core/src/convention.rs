//! Quadrature normalization shared by every representation in the crate.
//!
//! Field operators split as `a = X + iP`, so `X = (a + a†)/2`,
//! `P = (a − a†)/(2i)` and `[X, P] = i/2`. The vacuum has `⟨X²⟩ = ⟨P²⟩ = 1/4`.
//! Separability bounds, the Simon threshold and the Duan bound all assume
//! this scaling.

/// Quadrature variance of the vacuum.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Tag written into serialized states.
pub const CONVENTION_TAG: &str = "x=(a+a^dag)/2;vacuum_var=0.25";

/// Largest Fock cutoff per mode that the adaptive truncation will try.
pub const MAX_CUTOFF: usize = 64;

/// Population allowed in the top Fock level of either mode.
pub const TAIL_TOLERANCE: f64 = 1e-8;
