//! Nonparametric calibration of Lévy jump measures on the torus.
//!
//! The jump measure is discretized by hat functions and its rates are fitted by
//! maximizing the log-likelihood of terminal samples. The density of the process
//! is propagated with a Chang-Cooper / BDF2 scheme for the Kolmogorov forward
//! equation, the gradient comes from the exact discrete adjoint, and the rates
//! are found by a projected Dai-Yuan conjugate gradient iteration.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration and
//! the command line driver live in the `levycal` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adjoint;
pub mod error;
pub mod forward;
pub mod likelihood;
pub mod linalg;
mod math;
pub mod optimizer;
pub mod simulator;
pub mod torus;

pub use adjoint::{adjoint_jump_operator, rate_gradient, solve_adjoint, terminal_condition, AdjointHistory, SampleSet};
pub use error::{Error, Result};
pub use forward::{
    apply_jump_operator, bdf2_step, cc_delta, euler_step, solve_forward, stability_bounds, CcOperator, DensityHistory,
    ForwardDiagnostics, JumpKernel, SolverOptions, StabilityBounds,
};
pub use likelihood::{
    aic_score, evaluate_objective, evaluate_objective_detailed, AicPenalty, ObjectiveValue, DEFAULT_EPS,
};
pub use optimizer::{
    aic_sweep, armijo_linesearch, calibrate, calibrate_from, dai_yuan_beta, observed_information, reduced_gradient,
    select_by_aic, standard_errors, BasisLayout, CalibrationProblem, ControlVector, FitReport, GradientEval,
    IterationRecord, LineSearch, LineSearchStep, OptimizerConfig, SweepEntry, SweepResult, Termination,
};
pub use simulator::{
    sample_bigamma, sample_compound_poisson, simulate, wrapped_bigamma_density, InitialLaw, JumpLaw, SimulationOutput,
    SimulationSpec, WrapConvention, DEFAULT_CHUNK_SIZE,
};
pub use torus::{project_to_torus, von_mises_density, ModelCoefficients, SplineBasis, TimeGrid, TorusGrid};
