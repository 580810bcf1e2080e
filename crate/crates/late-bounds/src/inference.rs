//! Inference for engagement-indexed effects: delta-method variances, Wald
//! tests against the χ²₁ reference, and a nonparametric bootstrap with
//! quantile confidence intervals in the style of Efron.
//!
//! Variance convention (shared with [`crate::estimators`]): every asymptotic
//! variance describes the √N-scaled estimator with N the total sample size,
//! so the composition rule
//!
//! ```text
//! τ²_γ(a) = c_γ(a)²·σ²_ITT + Δ²_ITT·σ²_c(a)
//! ```
//!
//! applies without rescaling, and finite-sample standard errors are
//! √(τ²/N). The scaling-factor variance uses the plug-in form
//!
//! ```text
//! σ²_c(a) = (1−γ)²·(γ + (1−γ)h(a))² / (γ + (1−γ)μ_h)⁴ · σ²_h
//! ```
//!
//! with no covariance term: ĉ and Δ̂_ITT are asymptotically uncorrelated
//! because the former depends on treated-arm engagement only and the latter
//! on the outcome contrast.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    itt_diff_means, itt_ols, mu_h_estimate, EstimatorError, IttEstimate, MuHEstimate,
};
use crate::late::{self, LateError};
use crate::model::{AnalysisConfig, GammaValue, IttMethod, ModelError, TrialDataset};
use crate::rng::{derive_seed, substream, TAG_BOOTSTRAP};
use crate::transform::TransformSpec;
use crate::util::{quantile_linear, sample_variance};

/// Cap on redraw attempts for a single bootstrap replicate before the run is
/// declared infeasible.
const MAX_RETRIES_PER_REPLICATE: usize = 1000;

/// Errors raised by the inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    /// γ = 0 with μ_h = 0: no effect scale to do inference on.
    #[error("gamma and mu_h are both zero; the effect scale is undefined")]
    ZeroDenominator,
    /// A Wald statistic needs a strictly positive variance.
    #[error("variance is zero; the Wald statistic is undefined")]
    ZeroVariance,
    /// The bootstrap redrew more than 10% of its resamples — the instrument
    /// is too weak (or the sample too small) for resampling inference.
    #[error(
        "bootstrap redrew {redraws} degenerate resamples across {reps} replicates (>10%); \
         the sample is too fragile for resampling inference"
    )]
    TooManyDegenerateResamples { redraws: usize, reps: usize },
    /// Invalid dataset or configuration.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// An estimator failed on the original (non-resampled) data.
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    /// A sensitivity computation failed.
    #[error(transparent)]
    Late(#[from] LateError),
}

/// Variance components for one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBundle {
    /// Variance of √N(ĉ − c), from the plug-in scaling-factor formula.
    pub sigma2_c: f64,
    /// Variance of √N(Δ̂_γ(a) − Δ_γ(a)).
    pub tau2: f64,
    /// Finite-sample standard error √(τ²/N).
    pub se_late: f64,
}

/// A Wald test of one scalar estimate against zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    /// W = N·estimate²/τ².
    pub statistic: f64,
    /// Upper-tail probability from the χ² distribution with one degree of
    /// freedom.
    pub p_value: f64,
    /// Degrees of freedom (always 1).
    pub df: u32,
}

/// Which scalar quantities a bootstrap (and the matching delta-method
/// summaries) should track, and in what order.
///
/// The label order is fixed: `itt`, `mu_h`, the Δ grid γ-outer/a-inner, then
/// ξ per γ. Replicate matrices, CI vectors, and delta-method SE vectors all
/// share this order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportPlan {
    /// Track Δ̂_ITT.
    pub include_itt: bool,
    /// Track μ̂_h.
    pub include_mu_h: bool,
    /// γ values of the Δ grid.
    pub gammas: Vec<GammaValue>,
    /// Engagement levels of the Δ grid.
    pub a_grid: Vec<f64>,
    /// γ values at which ξ is tracked.
    pub xi_gammas: Vec<GammaValue>,
}

impl ReportPlan {
    /// Track everything the configuration can support: ITT, μ_h, the full
    /// Δ grid, and ξ at every configured γ.
    pub fn full(config: &AnalysisConfig) -> Self {
        ReportPlan {
            include_itt: true,
            include_mu_h: true,
            gammas: config.gamma_grid.clone(),
            a_grid: config.a_grid.clone(),
            xi_gammas: config.gamma_grid.clone(),
        }
    }

    /// Stable labels for the tracked quantities, in tracking order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.len());
        if self.include_itt {
            labels.push("itt".to_string());
        }
        if self.include_mu_h {
            labels.push("mu_h".to_string());
        }
        for g in &self.gammas {
            for a in &self.a_grid {
                labels.push(format!("delta[gamma={g},a={a}]"));
            }
        }
        for g in &self.xi_gammas {
            labels.push(format!("xi[gamma={g}]"));
        }
        labels
    }

    /// Number of tracked quantities.
    pub fn len(&self) -> usize {
        usize::from(self.include_itt)
            + usize::from(self.include_mu_h)
            + self.gammas.len() * self.a_grid.len()
            + self.xi_gammas.len()
    }

    /// Whether the plan tracks nothing.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A complete bootstrap summary: the raw replicate matrix plus per-quantity
/// quantile CIs and replicate standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Quantity labels, in [`ReportPlan`] order.
    pub labels: Vec<String>,
    /// B rows, one per replicate, each with one entry per tracked quantity.
    pub replicates: Vec<Vec<f64>>,
    /// Lower CI endpoint per quantity (the (1−level)/2 quantile).
    pub ci_lower: Vec<f64>,
    /// Upper CI endpoint per quantity (the 1−(1−level)/2 quantile).
    pub ci_upper: Vec<f64>,
    /// Replicate standard deviation per quantity.
    pub se_boot: Vec<f64>,
    /// The master seed the run was keyed on.
    pub seed: u64,
    /// How many degenerate resamples were redrawn across all replicates.
    pub redraws: usize,
}

/// Variance of the √N-scaled scaling factor ĉ_γ(a).
pub fn var_c(gamma: GammaValue, h_a: f64, mu: &MuHEstimate) -> Result<f64, InferenceError> {
    let g = gamma.value();
    let denom = g + (1.0 - g) * mu.mu_h;
    if denom <= 0.0 {
        return Err(InferenceError::ZeroDenominator);
    }
    let numerator = (1.0 - g).powi(2) * (g + (1.0 - g) * h_a).powi(2);
    Ok(numerator / denom.powi(4) * mu.sigma2_h)
}

/// Full variance bundle for Δ̂_γ(a): scaling-factor variance, composed τ²,
/// and the finite-sample standard error.
pub fn var_late(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    gamma: GammaValue,
    h_a: f64,
) -> Result<VarianceBundle, InferenceError> {
    let sigma2_c = var_c(gamma, h_a, mu)?;
    let c = late::c_factor(gamma, h_a, mu.mu_h)?;
    let tau2 = c * c * itt.sigma2_itt + itt.delta_itt * itt.delta_itt * sigma2_c;
    let se_late = (tau2 / itt.n_total as f64).sqrt();
    Ok(VarianceBundle { sigma2_c, tau2, se_late })
}

/// Wald test of `estimate = 0` with √N-scaled variance `tau2` and sample
/// size `n`; the statistic is referred to χ²₁.
pub fn wald(estimate: f64, tau2: f64, n: usize) -> Result<WaldTest, InferenceError> {
    if !(tau2 > 0.0) {
        return Err(InferenceError::ZeroVariance);
    }
    let statistic = n as f64 * estimate * estimate / tau2;
    // Upper tail of χ²₁: P(W > w) = erfc(√(w/2)).
    let p_value = statrs::function::erf::erfc((statistic / 2.0).sqrt());
    Ok(WaldTest { statistic, p_value, df: 1 })
}

/// Standard-normal quantile (inverse CDF), for large-sample intervals of the
/// form `estimate ± z·se`. Requires `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    debug_assert!(p > 0.0 && p < 1.0, "quantile level must lie strictly in (0, 1)");
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Fit the two estimated ingredients — Δ̂_ITT (by the configured method) and
/// μ̂_h (under the configured transform) — from one dataset.
pub fn fit_core(
    data: &TrialDataset,
    config: &AnalysisConfig,
) -> Result<(IttEstimate, MuHEstimate), InferenceError> {
    let itt = match config.itt_method {
        IttMethod::DiffMeans => itt_diff_means(data)?,
        IttMethod::OlsAdjusted => itt_ols(data, &config.adjustment)?,
    };
    let mu = mu_h_estimate(data, &config.transform)?;
    Ok((itt, mu))
}

/// Evaluate every quantity a plan tracks, in label order, from fitted
/// ingredients.
pub fn point_quantities(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    plan: &ReportPlan,
    spec: &TransformSpec,
) -> Result<Vec<f64>, InferenceError> {
    let mut out = Vec::with_capacity(plan.len());
    if plan.include_itt {
        out.push(itt.delta_itt);
    }
    if plan.include_mu_h {
        out.push(mu.mu_h);
    }
    for &g in &plan.gammas {
        for &a in &plan.a_grid {
            out.push(late::late_estimate(itt, mu, g, spec, a)?.delta);
        }
    }
    for &g in &plan.xi_gammas {
        out.push(late::xi(itt, mu, g)?.xi);
    }
    Ok(out)
}

/// Delta-method standard errors for every tracked quantity, in label order.
///
/// ITT and μ_h use their own asymptotic variances; Δ cells use the composed
/// τ²; ξ cells use the product form ξ_γ = Δ_γ(1)(1−γ), whose SE is
/// (1−γ)·se(Δ̂_γ(1)).
pub fn se_lst(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    plan: &ReportPlan,
    spec: &TransformSpec,
) -> Result<Vec<f64>, InferenceError> {
    let n = itt.n_total as f64;
    let mut out = Vec::with_capacity(plan.len());
    if plan.include_itt {
        out.push((itt.sigma2_itt / n).sqrt());
    }
    if plan.include_mu_h {
        out.push((mu.sigma2_h / n).sqrt());
    }
    for &g in &plan.gammas {
        for &a in &plan.a_grid {
            let h_a = spec.apply(a).map_err(LateError::from)?;
            out.push(var_late(itt, mu, g, h_a)?.se_late);
        }
    }
    for &g in &plan.xi_gammas {
        let bundle = var_late(itt, mu, g, 1.0)?;
        out.push((1.0 - g.value()) * bundle.se_late);
    }
    Ok(out)
}

/// Summarize a replicate matrix into quantile CIs and replicate SDs.
pub(crate) fn summarize_replicates(
    labels: Vec<String>,
    replicates: Vec<Vec<f64>>,
    ci_level: f64,
    seed: u64,
    redraws: usize,
) -> BootstrapResult {
    let q = labels.len();
    let alpha = 1.0 - ci_level;
    let mut ci_lower = Vec::with_capacity(q);
    let mut ci_upper = Vec::with_capacity(q);
    let mut se_boot = Vec::with_capacity(q);
    for j in 0..q {
        let mut column: Vec<f64> = replicates.iter().map(|row| row[j]).collect();
        column.sort_by(f64::total_cmp);
        ci_lower.push(quantile_linear(&column, alpha / 2.0));
        ci_upper.push(quantile_linear(&column, 1.0 - alpha / 2.0));
        se_boot.push(sample_variance(&column).sqrt());
    }
    BootstrapResult { labels, replicates, ci_lower, ci_upper, se_boot, seed, redraws }
}

/// Nonparametric bootstrap: B resamples of the pooled rows (i.i.d. with
/// replacement), re-running the full estimation pipeline on each and
/// summarizing every tracked quantity with quantile CIs and replicate SDs.
///
/// Resamples on which the pipeline degenerates (an arm too small, μ̂_h = 0,
/// a collinear resampled design) are redrawn from the same replicate
/// substream and counted; if redraws exceed 10% of B the run aborts with
/// [`InferenceError::TooManyDegenerateResamples`].
///
/// Determinism: replicate r's draws depend only on (config.seed, r), so the
/// result is bit-identical for any worker count.
pub fn bootstrap(
    data: &TrialDataset,
    config: &AnalysisConfig,
    plan: &ReportPlan,
) -> Result<BootstrapResult, InferenceError> {
    config.validate()?;
    // Preflight on the original data so genuine specification errors
    // surface directly instead of masquerading as degenerate resamples.
    let (itt, mu) = fit_core(data, config)?;
    let _ = point_quantities(&itt, &mu, plan, &config.transform)?;

    let b = config.bootstrap_reps;
    let n = data.n();
    let names = data.covariate_names().to_vec();
    let boot_seed = derive_seed(config.seed, TAG_BOOTSTRAP);

    let per_replicate: Result<Vec<(Vec<f64>, usize)>, InferenceError> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(boot_seed, r as u64);
            let mut retries = 0usize;
            loop {
                let rows = (0..n)
                    .map(|_| data.rows()[rand::Rng::random_range(&mut rng, 0..n)].clone())
                    .collect();
                let resample = TrialDataset::from_parts_unchecked(rows, names.clone());
                match fit_core(&resample, config)
                    .and_then(|(itt, mu)| point_quantities(&itt, &mu, plan, &config.transform))
                {
                    Ok(values) => return Ok((values, retries)),
                    Err(_) => {
                        retries += 1;
                        if retries > MAX_RETRIES_PER_REPLICATE {
                            return Err(InferenceError::TooManyDegenerateResamples {
                                redraws: retries,
                                reps: b,
                            });
                        }
                    }
                }
            }
        })
        .collect();
    let per_replicate = per_replicate?;

    let redraws: usize = per_replicate.iter().map(|(_, r)| r).sum();
    if redraws as f64 > 0.1 * b as f64 {
        return Err(InferenceError::TooManyDegenerateResamples { redraws, reps: b });
    }
    let replicates: Vec<Vec<f64>> = per_replicate.into_iter().map(|(v, _)| v).collect();

    Ok(summarize_replicates(plan.labels(), replicates, config.ci_level, config.seed, redraws))
}
