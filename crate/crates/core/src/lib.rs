//! Periodic within-host viral infection model with Crowley–Martin incidence.
//!
//! The crate covers the whole numerical pipeline for the forced system
//! `(T, E, I, V)`:
//!
//! - [`model`]: parameters, vector field, analytic Jacobian, simulation;
//! - [`integrate`]: adaptive Dormand–Prince integration of vector and matrix ODEs;
//! - [`periodic`]: the virus-free periodic solution, the period map, Newton
//!   shooting for endemic orbits and Floquet multipliers;
//! - [`reproduction`]: the linearised infection subsystem and the periodic
//!   basic reproduction number `R0`;
//! - [`analysis`]: regime classification, invariant monitors and sweeps.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the tolerance
//! defaults are tuned for.
//!
//! ```
//! use cmperiodic::{r0_periodic, IntegratorConfig, ModelParameters64, ScalarRates, SinusoidalCoefficient};
//!
//! let w = std::f64::consts::TAU / 24.0;
//! let params = ModelParameters64::new(
//!     SinusoidalCoefficient::new(0.1, 0.05, w)?,
//!     SinusoidalCoefficient::new(0.3, 0.1, w)?,
//!     SinusoidalCoefficient::new(0.01, 0.005, w)?,
//!     ScalarRates { k: 0.2, delta: 0.1, p: 0.5, c: 0.1, c1: 0.1, c2: 0.1 },
//! )?;
//! let r0 = r0_periodic(&params, 1e-8, &IntegratorConfig::spectral())?;
//! assert!(r0.value > 1.0);
//! # Ok::<(), cmperiodic::Error>(())
//! ```

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod periodic;
pub mod reproduction;
pub mod scalar;

pub use analysis::{
    classify, monitor_invariants, sweep, AnalysisConfig, ClassificationReport, InvariantLog, Regime, SweepRow,
};
pub use error::{Error, Result};
pub use integrate::{integrate, integrate_matrix, integrate_with, IntegratorConfig, MatrixSolution, OdeSolution, SolveOptions};
pub use linalg::Matrix;
pub use model::{
    incidence, jacobian, rhs, simulate, ModelParameters, ParamKey, ScalarRates, SinusoidalCoefficient, State,
    Trajectory,
};
pub use num_complex::Complex;
pub use periodic::{
    find_periodic_orbit, floquet_multipliers, poincare_map, virus_free_closed_form, virus_free_numeric, PeriodicOrbit,
    VirusFreeSolution,
};
pub use reproduction::{
    build_linearization, monodromy, r0_autonomous, r0_periodic, spectral_radius, LinearizedSystem, MonodromyResult,
    R0Method, R0Result,
};
pub use scalar::Real;

pub type ModelParameters64 = ModelParameters<f64>;
pub type ModelParameters32 = ModelParameters<f32>;
pub type State64 = State<f64>;
pub type State32 = State<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type IntegratorConfig64 = IntegratorConfig<f64>;
pub type Matrix64 = Matrix<f64>;
pub type VirusFreeSolution64 = VirusFreeSolution<f64>;
pub type PeriodicOrbit64 = PeriodicOrbit<f64>;
pub type R0Result64 = R0Result<f64>;
pub type MonodromyResult64 = MonodromyResult<f64>;
pub type ClassificationReport64 = ClassificationReport<f64>;
pub type AnalysisConfig64 = AnalysisConfig<f64>;
