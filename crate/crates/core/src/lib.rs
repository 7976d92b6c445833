//! Sparse identification of ODE right-hand sides with inference-equipped
//! regression: debiased Lasso, bias-corrected ridge and a spike-and-slab
//! empirical Bayes selector, plus plain Lasso, STLS and bootstrap-ensemble
//! baselines and a seeded simulation harness.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod regression;
pub mod semms;

pub use dynamics::{
    add_noise, builtin_system, default_protocol, exact_derivatives, rk4_integrate, FnField, NoiseConfig, NoiseMode,
    OdeSystemSpec, Protocol, SystemParams, Trajectory, VectorField,
};
pub use ensemble::{esindy, esindy_aggregate, esindy_with, Aggregate, EnsembleReport};
pub use error::{Error, Result};
pub use features::{
    build_basis, estimate_derivatives, evaluate_library, finite_difference_derivatives, fit_smoothing_spline,
    smoothed_states, DerivativeMatrix, DesignMatrix, MonomialBasis, Smoothing, SmoothingSpline,
};
pub use inference::{
    bias_corrected_ridge, compute_m, debiased_lasso, holm_adjust, long_run_variance, DebiasedOptions, DebiasedReport,
    MMatrix, RidgeOptions, RidgeReport, SigmaEstimator,
};
pub use regression::{
    lasso, lasso_cv, lasso_cv_scaled, ols_inference, ridge, scaled_lasso, stls, CvOptions, LassoCvFit, LassoFit,
    LassoOptions, NoiseEstimate, OlsInference, StlsFit,
};
pub use semms::{semms_fit, semms_fit_from, semms_select, SemmsModel, SemmsOptions, SemmsSelection};
