//! Simulation and verification of Dirichlet diffusions on the cone of
//! discrete Radon measures over a flat torus.

// Index loops mirror the coordinate formulas; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cone;
pub mod config;
pub mod densities;
pub mod dynamics;
pub mod error;
pub mod functionals;
pub mod intensity;
pub mod io;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod space;
pub mod stats;
pub mod verify;

pub use cone::{sample_eta, DiscreteMeasure, HatPoint, Theta};
pub use config::{Experiment, ExperimentConfig};
pub use dynamics::{evolve, DriftControl, StepDiagnostics, Trajectory};
pub use error::{Error, Result};
pub use functionals::{CylinderFunction, MarkFunction, MassProfile};
pub use intensity::{ConditionReport, IntensityModel, MassSampler, ModelSpec, Verdict};
pub use io::Metadata;
pub use space::{Point, ScalarField, TorusSpace, VectorField};
pub use stats::Estimate;
pub use verify::{run_check, run_suite, CheckName, CheckResult, CheckSpec, RunContext, SuiteReport};
