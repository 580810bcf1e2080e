//! The sensitivity core: effects indexed by post-randomization engagement.
//!
//! Randomization identifies the intention-to-treat contrast Δ_ITT but not the
//! effect Δ(a) among subjects who would engage at level a. Under the working
//! principle that effects scale with engagement through a single sensitivity
//! parameter γ ∈ [0, 1] — γ is the ratio of the zero-engagement effect to the
//! full-engagement effect — every Δ(a) becomes a known multiple of Δ_ITT:
//!
//! ```text
//! Δ_γ(a) = Δ_ITT · (γ + (1−γ)·h(a)) / (γ + (1−γ)·μ_h)
//! ```
//!
//! with h a fixed engagement transform and μ_h the treated-arm mean of h(A).
//! γ = 1 collapses to the ITT reading; γ = 0 is the classical exclusion
//! restriction, where Δ_0(1) is the familiar Wald ratio Δ_ITT/μ_h. Sweeping γ
//! over [0, 1] therefore traces every effect curve consistent with the data,
//! and the extremes give sharp bounds.
//!
//! This module is pure arithmetic on estimated inputs; inference lives in
//! [`crate::inference`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{IttEstimate, MuHEstimate};
use crate::model::GammaValue;
use crate::transform::{HInverse, TransformError, TransformSpec};

/// Errors raised by the sensitivity computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LateError {
    /// γ = 0 with μ_h = 0: the scaling denominator vanishes.
    #[error("gamma and mu_h are both zero; the effect scale is undefined")]
    ZeroDenominator,
    /// μ_h ≤ 0: bounds and effect curves are undefined.
    #[error("mu_h must be positive, got {mu_h}")]
    ZeroInstrument { mu_h: f64 },
    /// Threshold solvers need a strictly positive threshold.
    #[error("threshold must be strictly positive, got {t}")]
    NonPositiveThreshold { t: f64 },
    /// Transform evaluation failed.
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// One cell of the sensitivity grid: the effect at engagement level `a`
/// under sensitivity value `gamma`, together with its γ-free sharp bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatePoint {
    /// Sensitivity value γ.
    pub gamma: GammaValue,
    /// Engagement level a ∈ [0, 1].
    pub a: f64,
    /// Transformed engagement h(a).
    pub h_a: f64,
    /// Scaling factor c_γ(a) = (γ + (1−γ)h(a)) / (γ + (1−γ)μ_h).
    pub c_factor: f64,
    /// Effect estimate Δ̂_γ(a) = Δ̂_ITT · c_γ(a), in outcome units.
    pub delta: f64,
    /// Sharp lower bound over all γ (plug-in).
    pub lower_bound: f64,
    /// Sharp upper bound over all γ (plug-in).
    pub upper_bound: f64,
}

/// The engagement-heterogeneity contrast ξ_γ = Δ_γ(1) − Δ_γ(0) at one γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiResult {
    /// Sensitivity value γ.
    pub gamma: GammaValue,
    /// ξ_γ = Δ_γ(1)·(1 − γ), in outcome units.
    pub xi: f64,
}

/// Where the effect-threshold solver landed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngagementSolution {
    /// A unique engagement level a* solving |Δ_γ(a)| = t.
    Unique { a_star: f64 },
    /// A step transform cannot be inverted uniquely: every a above the cut
    /// point satisfies the threshold, every a at or below it does not.
    ThresholdBoundary { zeta: f64 },
}

/// The scaling factor c_γ(a) = (γ + (1−γ)·h(a)) / (γ + (1−γ)·μ_h).
///
/// Defined whenever the denominator is positive, i.e. γ > 0 or μ_h > 0.
pub fn c_factor(gamma: GammaValue, h_a: f64, mu_h: f64) -> Result<f64, LateError> {
    let g = gamma.value();
    let denom = g + (1.0 - g) * mu_h;
    if denom <= 0.0 {
        return Err(LateError::ZeroDenominator);
    }
    Ok((g + (1.0 - g) * h_a) / denom)
}

/// The effect estimate at one (γ, a) cell, with its sharp bounds attached.
///
/// At (γ, a) = (0, 0) the numerator γ + (1−γ)h(0) vanishes for every valid
/// transform (h(0) = 0), so Δ̂_0(0) = 0 falls out of the formula; reports
/// label that cell a convention rather than an estimate.
pub fn late_estimate(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    gamma: GammaValue,
    spec: &TransformSpec,
    a: f64,
) -> Result<LatePoint, LateError> {
    let h_a = spec.apply(a)?;
    let c = c_factor(gamma, h_a, mu.mu_h)?;
    let (lower_bound, upper_bound) = bounds(itt, mu, spec, a)?;
    Ok(LatePoint {
        gamma,
        a,
        h_a,
        c_factor: c,
        delta: itt.delta_itt * c,
        lower_bound,
        upper_bound,
    })
}

/// Sharp, assumption-lean bounds on Δ(a): over γ ∈ [0, 1] the effect curve
/// attains its extrema at the endpoints, giving candidates Δ_ITT (γ = 1) and
/// Δ_ITT·h(a)/μ_h (γ = 0). Returned ordered as (lower, upper), which
/// flips orientation automatically with the sign of Δ_ITT.
pub fn bounds(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    spec: &TransformSpec,
    a: f64,
) -> Result<(f64, f64), LateError> {
    if mu.mu_h <= 0.0 {
        return Err(LateError::ZeroInstrument { mu_h: mu.mu_h });
    }
    let h_a = spec.apply(a)?;
    let at_one = itt.delta_itt;
    let at_zero = itt.delta_itt * h_a / mu.mu_h;
    Ok((at_one.min(at_zero), at_one.max(at_zero)))
}

/// Evaluate the full sensitivity grid, γ-outer then a-inner (row-major).
pub fn grid(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    gammas: &[GammaValue],
    spec: &TransformSpec,
    a_grid: &[f64],
) -> Result<Vec<LatePoint>, LateError> {
    let mut out = Vec::with_capacity(gammas.len() * a_grid.len());
    for &g in gammas {
        for &a in a_grid {
            out.push(late_estimate(itt, mu, g, spec, a)?);
        }
    }
    Ok(out)
}

/// The heterogeneity contrast ξ_γ = Δ_γ(1) − Δ_γ(0) = Δ_γ(1)·(1 − γ).
///
/// Since h(1) = 1 for every valid transform, ξ_γ needs no transform input:
/// ξ_γ = Δ_ITT·(1 − γ)/(γ + (1−γ)·μ_h).
pub fn xi(itt: &IttEstimate, mu: &MuHEstimate, gamma: GammaValue) -> Result<XiResult, LateError> {
    let c1 = c_factor(gamma, 1.0, mu.mu_h)?;
    Ok(XiResult { gamma, xi: itt.delta_itt * c1 * (1.0 - gamma.value()) })
}

/// The largest γ at which engagement heterogeneity still reaches `t`:
/// solves |ξ_γ| = t in closed form,
///
/// ```text
/// γ* = (|Δ_ITT| − t·μ_h) / (|Δ_ITT| − t·μ_h + t)
/// ```
///
/// |ξ_γ| exceeds t exactly for γ < γ*. Returns `None` when even γ = 0
/// cannot reach the threshold (t > |Δ_ITT|/μ_h, the Wald-scale maximum).
pub fn gamma_for_xi_threshold(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    t: f64,
) -> Result<Option<GammaValue>, LateError> {
    if !(t > 0.0) {
        return Err(LateError::NonPositiveThreshold { t });
    }
    if mu.mu_h <= 0.0 {
        return Err(LateError::ZeroInstrument { mu_h: mu.mu_h });
    }
    let numerator = itt.delta_itt.abs() - t * mu.mu_h;
    if numerator < 0.0 {
        // |ξ_0| = |Δ_ITT|/μ_h is the maximum over γ; below t means no root.
        return Ok(None);
    }
    let gamma_star = numerator / (numerator + t);
    Ok(Some(GammaValue::new(gamma_star).expect("closed form lies in [0,1)")))
}

/// The smallest engagement level whose effect reaches `t` in magnitude at a
/// fixed γ: solves |Δ_γ(a)| = t via
///
/// ```text
/// h(a*) = [ t·(γ + (1−γ)·μ_h)/|Δ_ITT| − γ ] / (1 − γ)
/// ```
///
/// then inverts the transform. Returns `None` when no engagement level in
/// [0, 1] solves the equation: either the whole curve already exceeds t
/// (h* < 0, the effect at a = 0 is past the threshold) or even full
/// engagement falls short (h* > 1). γ = 1 gives a flat curve with no
/// crossing, so it also returns `None`. A step transform has no unique
/// inverse; the cut point comes back as
/// [`EngagementSolution::ThresholdBoundary`].
pub fn engagement_for_effect_threshold(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    gamma: GammaValue,
    spec: &TransformSpec,
    t: f64,
) -> Result<Option<EngagementSolution>, LateError> {
    if !(t > 0.0) {
        return Err(LateError::NonPositiveThreshold { t });
    }
    if mu.mu_h <= 0.0 {
        return Err(LateError::ZeroInstrument { mu_h: mu.mu_h });
    }
    let g = gamma.value();
    let abs_itt = itt.delta_itt.abs();
    if g >= 1.0 || abs_itt == 0.0 {
        // Flat in a (γ = 1) or identically zero (Δ_ITT = 0): no crossing.
        return Ok(None);
    }
    let h_star = (t * (g + (1.0 - g) * mu.mu_h) / abs_itt - g) / (1.0 - g);
    if !(0.0..=1.0).contains(&h_star) {
        return Ok(None);
    }
    let solution = match spec.invert_min(h_star) {
        HInverse::Unique(a_star) => EngagementSolution::Unique { a_star },
        HInverse::Boundary { zeta } => EngagementSolution::ThresholdBoundary { zeta },
    };
    Ok(Some(solution))
}
