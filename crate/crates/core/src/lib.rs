//! Quasi-stationary distributions of the stochastic logistic SIS model.
//!
//! The SIS (susceptible–infected–susceptible) epidemic in a population of
//! N individuals is a birth–death Markov chain on {0, 1, …, N} whose only
//! absorbing state is 0 (extinction of the infection). Conditioned on not
//! having hit 0, the process settles into its *quasi-stationary
//! distribution* (QSD) — the object this crate computes exactly, in
//! arbitrary precision, and compares against the closed-form
//! approximations from the classical analysis of the model:
//!
//! * [`model`] — birth/death rate schedules for the SIS chain and its
//!   Verhulst generalization, generic over the scalar type;
//! * [`numerics`] — the [`MpFloat`] arbitrary-precision scalar (MPFR via
//!   `rug`), the [`Real`] abstraction, precision/tolerance policy, and
//!   compensated summation;
//! * [`qsd`] — the fixed-point QSD solver and an independent
//!   power-iteration oracle used to cross-check it;
//! * [`approx`] — the approximation families: auxiliary-process
//!   stationary distributions p⁽⁰⁾/p⁽¹⁾, the Ovaskainen expansion OV3,
//!   geometric laws G1/G2, and a moment-fitted beta-binomial;
//! * [`error_analysis`] — Err₁/Err₂ metrics, validated error reports, and
//!   the doubling-in-N scaling classifier;
//! * [`experiment`] — grid runs reproducing the published error tables,
//!   with CSV / aligned-text / JSON-lines rendering.
//!
//! Computations run in [`MpFloat`] working precision chosen so that even
//! errors around 10⁻⁶¹ (the sharpest table entries) carry many accurate
//! digits; results are downconverted to `f64` only at the reporting
//! boundary.
//!
//! ```
//! use sis_qsd::{default_context, solve_qsd, MpFloat, MpModel, Real};
//!
//! let ctx = default_context(50, 2.0);
//! let model = MpModel::sis(
//!     50,
//!     MpFloat::from_u64(2, &ctx),
//!     MpFloat::from_u64(1, &ctx),
//! ).unwrap();
//! let qsd = solve_qsd(&model, &ctx).unwrap();
//! assert!(qsd.prob(25).to_f64() > 0.0);
//! ```

pub mod approx;
pub mod error_analysis;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod qsd;

pub use approx::{
    beta_binomial_fit, beta_binomial_pmf, closed_form_pi, closed_form_rho, f_factor,
    geometric_distribution, geometric_params, ov1_weights, ov2_weights, ov3_distribution,
    ovb_weights, p0_distribution, p1_distribution, pi_weights, rho_weights, ApproxError,
    ApproxKind, GeometricParams, GeometricVariant, UnknownApprox, WeightKind, WeightVector,
};
pub use error_analysis::{
    classify_scaling, err1, err2, ErrorAnalysisError, ErrorReport, ScalingClass, ScalingVerdict,
};
pub use experiment::{
    emit_report, evaluate_approx, render_report, run_experiment, CellFailure, CellOutcome,
    ExperimentConfig, ExperimentError, ExperimentKind, ExperimentResult, OutputFormat,
};
pub use model::{k_function, ovaskainen_r0, BirthDeathModel, ModelError};
pub use numerics::{
    default_context, rel_diff, stable_sum, MpFloat, NumericsError, PrecisionContext, Real,
};
pub use qsd::{
    decay_rate, max_balance_residual, qsd_power_oracle, qsd_power_oracle_with, solve_qsd,
    solve_qsd_with, Distribution, DistributionError, InitStrategy, ModelTag, QsdError,
    SolveOptions,
};

/// The arbitrary-precision model most callers want.
pub type MpModel = BirthDeathModel<MpFloat>;
/// A model over hardware floats, for quick low-precision work.
pub type F64Model = BirthDeathModel<f64>;
/// An arbitrary-precision distribution over {1, …, N}.
pub type MpDistribution = Distribution<MpFloat>;
