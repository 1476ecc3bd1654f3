//! Entanglement detection for two-mode continuous-variable states from a
//! single pair of homodyne measurements.
//!
//! States live in a truncated two-mode Fock basis ([`TwoModeState`]). A test
//! function `F` of the EPR variable `Ô = û² + v̂²` is compared against the
//! range `[F_min, F_max]` that every separable state must respect
//! ([`separability_bounds`]); values outside signal entanglement. The same
//! functional gives the Braunstein–Kimble teleportation fidelity of a
//! two-mode resource ([`teleport`]).
//!
//! Conventions: `X = (a + a†)/2`, `P = (a − a†)/(2i)`, vacuum variance 1/4.

pub mod baselines;
pub mod bounds;
pub mod catalog;
pub mod convention;
pub mod epr;
pub mod error;
pub mod fock;
pub mod noise;
pub mod quadrature;
pub mod runner;
pub mod special;
pub mod teleport;

pub use baselines::{duan_test, simon_test, CovarianceReport, DuanReport};
pub use bounds::{duan_bound, separability_bounds, separability_bounds_with_gain, SeparabilityBounds, TestFunction};
pub use catalog::{
    coherent_product, energy_matched_tmss, make_dephased_cat, make_psi_b, make_tmss, thermal_coherent_product,
    CatSpec, StateSpec, TmssOperation, TmssSpec,
};
pub use epr::{
    empirical_witness, exact_expectation, prepare, sample_homodyne, verdict, EprMeasurementConfig, EstimateMode,
    HomodyneSample, MeasuredState, Verdict, WitnessEstimate,
};
pub use error::{Error, Result};
pub use fock::{Mode, TwoModeState};
pub use noise::{apply_loss_thermal, decoherence_trajectory, NoiseSpec, NoiseStage};
pub use runner::{
    detection_time, figure_sweep, optimize_empirical, optimize_witness, Criterion, DetectionTimeSpec, Figure,
    Objective, OptimizationSpec, SweepConfig, SweepResult, WitnessOptimum, WitnessPoint,
};
pub use teleport::{fidelity_via_epr, PmChannel, TeleportReport};
