//! Sensitivity analysis for engagement-indexed treatment effects in
//! randomized trials.
//!
//! Randomization identifies the intention-to-treat effect, but effects among
//! subjects at a given level of post-randomization engagement are not
//! identified once engagement can act outside the treatment pathway. This
//! crate implements a one-parameter sensitivity analysis for that problem:
//! a scalar γ ∈ [0, 1] — the ratio of the zero-engagement effect to the
//! full-engagement effect — indexes every effect curve consistent with the
//! data, with γ = 0 recovering the classical exclusion-restriction (Wald)
//! analysis and γ = 1 the flat ITT reading.
//!
//! The pieces:
//!
//! - [`model`] — validated trial data, γ values, analysis configuration.
//! - [`transform`] — engagement transforms h(·): identity, step, or tabled.
//! - [`estimators`] — Δ̂_ITT (difference in means, or covariate-adjusted
//!   least squares with a robust variance) and μ̂_h, plus restricted cubic
//!   spline bases for flexible adjustment.
//! - [`late`] — the sensitivity core: effect curves Δ_γ(a), sharp bounds,
//!   heterogeneity contrasts ξ_γ, and closed-form threshold solvers.
//! - [`inference`] — delta-method variances, χ²₁ Wald tests, and a
//!   deterministic parallel bootstrap with quantile intervals.
//! - [`simulate`] — a synthetic-trial engine with quadrature oracles and a
//!   Monte Carlo harness.
//!
//! Determinism contract: every randomized routine is keyed on an explicit
//! master seed and assigns one counter-based RNG substream per unit of work,
//! so results are bit-identical for any worker count (see
//! [`with_thread_limit`]).

pub mod estimators;
pub mod inference;
pub mod late;
pub mod model;
mod rng;
pub mod simulate;
pub mod transform;
mod util;

pub use estimators::{
    design_matrix, itt_diff_means, itt_ols, mu_h_estimate, quartile_knots, rcs_basis,
    EstimatorError, IttEstimate, MuHEstimate, SplineBasis,
};
pub use inference::{
    bootstrap, fit_core, normal_quantile, point_quantities, se_lst, var_c, var_late, wald,
    BootstrapResult, InferenceError, ReportPlan, VarianceBundle, WaldTest,
};
pub use late::{
    bounds, c_factor, engagement_for_effect_threshold, gamma_for_xi_threshold, grid,
    late_estimate, xi, EngagementSolution, LateError, LatePoint, XiResult,
};
pub use model::{
    validate_dataset, Adjustment, AnalysisConfig, GammaValue, IttMethod, KnotPolicy, ModelError,
    RawRow, SplineTerm, TrialDataset, TrialRow,
};
pub use rng::with_thread_limit;
pub use simulate::{
    gen_dataset, misspecification_sweep, monte_carlo, parse_scenario_file, true_gamma, true_mu_a,
    GeneratedTrial, LatentRow, McRow, McSummary, ScenarioSpec, SimError,
};
pub use transform::{TransformError, TransformSpec};
