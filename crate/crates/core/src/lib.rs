//! Noise design for differentially private SGD with Gamma-mixture Laplace
//! ("PLRV") noise.
//!
//! The crate covers the whole pipeline:
//!
//! * [`accountant`]: per-step log moments for subsampled Gaussian, Laplace
//!   and Γ-PLRV noise, composition over steps and the (ε, δ) conversion.
//! * [`distortion`]: expected per-coordinate noise magnitude and the SNR
//!   objective.
//! * [`optimizer`]: constrained search for the Gamma parameters `(k, theta)`
//!   and the clip `C`.
//! * [`sampler`]: seeded noise generation.
//! * [`dpsgd`]: a small, fully deterministic DP-SGD loop.
//!
//! ```
//! use plrvo::{Accountant, AccountingJob, GammaPlrvParams, LambdaSearch, Mechanism, SumMode};
//!
//! let params = GammaPlrvParams::new(414.2857, 2.4196e-4)?;
//! let job = AccountingJob::new(100, 0.00977631, 1000, 0.1, 1e-5, 64)?;
//! let mut acc = Accountant::new(Mechanism::Plrvo(params), job, SumMode::Exact)?;
//! let report = acc.job_epsilon(LambdaSearch::Full)?;
//! assert!(report.epsilon > 0.0);
//! # Ok::<(), plrvo::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod distortion;
pub mod dpsgd;
mod error;
pub mod io;
pub mod majorization;
pub mod numerics;
pub mod optimizer;
pub mod parallel;
pub mod params;
pub mod sampler;

pub use accountant::{
    compose, delta_from_epsilon, epsilon_from_delta, epsilon_from_delta_coarse, gamma_mgf_log,
    gaussian_subsampled_log_moment, laplace_multivariate_log_moment, laplace_privacy_loss_bound,
    laplace_univariate_log_moment, plrv_g_term, plrv_multivariate_log_moment, plrv_univariate_log_moment,
    AccountReport, Accountant, EpsilonResult, LambdaSearch, SumMode,
};
pub use distortion::{gaussian_distortion, l1_l2_volume_log_ratio, plrv_distortion, snr, DistortionReport};
pub use error::{Error, Result};
pub use majorization::MajorizationSet;
pub use optimizer::{
    check_feasible, gamma_plrv_k_bounds, solve, ConstraintReport, FeasibilityConfig, OptimizationResult,
};
pub use params::{
    default_lambda_max, validate, AccountingJob, GammaPlrvParams, GaussianParams, LaplaceParams, LogMomentCurve,
    Mechanism, MechanismKind, PrivacyTarget, DEFAULT_LAMBDA_MAX,
};
pub use sampler::{sample_gamma, sample_gaussian_noise, sample_plrv_noise, NoiseDraw, NoiseRng};
