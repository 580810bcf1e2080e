//! Monotone engagement transforms h(·).
//!
//! A transform maps observed engagement a ∈ [0, 1] onto the scale that
//! indexes treatment-effect localities. Every valid transform is
//! nondecreasing with h(0) = 0 and h(1) = 1. Three families are supported:
//! the identity (the default), a hard threshold 1(a > ζ) that coarsens
//! engagement into "meaningful" vs. "not", and an arbitrary piecewise-linear
//! table for everything in between.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of equispaced points used for the grid monotonicity check in
/// [`TransformSpec::validate`].
const VALIDATION_GRID: usize = 1001;

/// Errors raised while validating or evaluating a transform.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    /// Evaluation point outside the unit interval.
    #[error("engagement {a} is outside [0, 1]")]
    DomainError { a: f64 },
    /// h(0) ≠ 0, h(1) ≠ 1, a table point outside the unit square, or a
    /// threshold cut outside (0, 1).
    #[error("transform endpoint condition violated: {detail}")]
    EndpointViolation { detail: String },
    /// h decreases somewhere on [0, 1].
    #[error("transform is not nondecreasing: {detail}")]
    MonotonicityViolation { detail: String },
}

/// Specification of the engagement transform h(·).
///
/// Construct through [`TransformSpec::identity`], [`TransformSpec::threshold`]
/// or [`TransformSpec::table`], which validate eagerly. Values arriving from
/// serialized configuration should be re-checked with
/// [`TransformSpec::validate`] before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// h(a) = a.
    Identity,
    /// h(a) = 1 if a > ζ, else 0 (strict inequality at the cut).
    Threshold { zeta: f64 },
    /// Piecewise-linear interpolation through `(a, h(a))` points covering
    /// [0, 1]. Points are kept sorted by `a`.
    Table { points: Vec<(f64, f64)> },
}

impl TransformSpec {
    /// The identity transform h(a) = a.
    pub fn identity() -> Self {
        TransformSpec::Identity
    }

    /// Threshold transform h(a) = 1(a > ζ); requires ζ strictly inside (0, 1)
    /// so that the endpoint conditions h(0) = 0 and h(1) = 1 hold.
    pub fn threshold(zeta: f64) -> Result<Self, TransformError> {
        TransformSpec::Threshold { zeta }.validate()
    }

    /// Piecewise-linear transform through the given points. The points are
    /// sorted by `a`, duplicates removed, and the endpoint and monotonicity
    /// conditions checked.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self, TransformError> {
        TransformSpec::Table { points }.validate()
    }

    /// Check the transform invariants — h(0) = 0, h(1) = 1 exactly, and
    /// nondecreasing on a grid of 1001 equispaced points — returning a
    /// normalized copy (table points sorted and deduplicated).
    pub fn validate(&self) -> Result<Self, TransformError> {
        let normalized = match self {
            TransformSpec::Identity => TransformSpec::Identity,
            TransformSpec::Threshold { zeta } => {
                if !zeta.is_finite() || *zeta <= 0.0 || *zeta >= 1.0 {
                    return Err(TransformError::EndpointViolation {
                        detail: format!("threshold cut {zeta} must lie strictly inside (0, 1)"),
                    });
                }
                TransformSpec::Threshold { zeta: *zeta }
            }
            TransformSpec::Table { points } => {
                TransformSpec::Table { points: normalize_table(points)? }
            }
        };

        // Uniform-grid monotonicity and endpoint check for every family.
        // Redundant for identity/threshold but cheap, and it keeps the
        // validation contract identical across kinds.
        let h0 = normalized.apply_unchecked(0.0);
        if h0 != 0.0 {
            return Err(TransformError::EndpointViolation {
                detail: format!("h(0) = {h0}, expected exactly 0"),
            });
        }
        let h1 = normalized.apply_unchecked(1.0);
        if h1 != 1.0 {
            return Err(TransformError::EndpointViolation {
                detail: format!("h(1) = {h1}, expected exactly 1"),
            });
        }
        let mut prev = 0.0;
        for i in 1..VALIDATION_GRID {
            let a = i as f64 / (VALIDATION_GRID - 1) as f64;
            let h = normalized.apply_unchecked(a);
            if h < prev {
                return Err(TransformError::MonotonicityViolation {
                    detail: format!("h({a:.4}) = {h} is below the preceding grid value {prev}"),
                });
            }
            prev = h;
        }
        Ok(normalized)
    }

    /// Evaluate h(a). Errors if `a` lies outside [0, 1].
    pub fn apply(&self, a: f64) -> Result<f64, TransformError> {
        if !a.is_finite() || !(0.0..=1.0).contains(&a) {
            return Err(TransformError::DomainError { a });
        }
        Ok(self.apply_unchecked(a))
    }

    fn apply_unchecked(&self, a: f64) -> f64 {
        match self {
            TransformSpec::Identity => a,
            TransformSpec::Threshold { zeta } => {
                if a > *zeta {
                    1.0
                } else {
                    0.0
                }
            }
            TransformSpec::Table { points } => interpolate(points, a),
        }
    }

    /// Smallest engagement level at which the transform reaches `target`,
    /// for target ∈ [0, 1].
    ///
    /// The identity and table kinds are continuous and onto [0, 1], so a
    /// unique infimum always exists; for a flat table segment the left edge
    /// of the plateau is returned. The threshold kind only attains {0, 1},
    /// so the jump location ζ is reported as a boundary instead of a
    /// pointwise solution.
    pub(crate) fn invert_min(&self, target: f64) -> HInverse {
        debug_assert!((0.0..=1.0).contains(&target));
        match self {
            TransformSpec::Identity => HInverse::Unique(target),
            TransformSpec::Threshold { zeta } => HInverse::Boundary { zeta: *zeta },
            TransformSpec::Table { points } => {
                if target <= 0.0 {
                    return HInverse::Unique(0.0);
                }
                for w in points.windows(2) {
                    let ((a0, h0), (a1, h1)) = (w[0], w[1]);
                    if target <= h1 {
                        // First segment whose upper value reaches the target;
                        // interpolate within it (h1 > h0 here because target
                        // exceeds every earlier value, in particular h0).
                        let frac = (target - h0) / (h1 - h0);
                        return HInverse::Unique(a0 + frac * (a1 - a0));
                    }
                }
                HInverse::Unique(1.0) // unreachable for valid tables (h(1) = 1)
            }
        }
    }
}

impl std::fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransformSpec::Identity => write!(f, "identity"),
            TransformSpec::Threshold { zeta } => write!(f, "threshold:{zeta}"),
            TransformSpec::Table { points } => write!(f, "table[{} points]", points.len()),
        }
    }
}

/// Result of inverting a transform at an attainable value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum HInverse {
    /// The infimum engagement achieving the value.
    Unique(f64),
    /// Non-invertible step transform: the effect changes only across the cut.
    Boundary { zeta: f64 },
}

/// Sort by `a`, drop exact duplicate points, and check the table invariants.
fn normalize_table(points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, TransformError> {
    if points.len() < 2 {
        return Err(TransformError::EndpointViolation {
            detail: format!("table needs at least the two endpoint points, got {}", points.len()),
        });
    }
    for &(a, h) in points {
        if !a.is_finite() || !h.is_finite() || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&h) {
            return Err(TransformError::EndpointViolation {
                detail: format!("table point ({a}, {h}) lies outside the unit square"),
            });
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    sorted.dedup();
    for w in sorted.windows(2) {
        let ((a0, h0), (a1, h1)) = (w[0], w[1]);
        if a0 == a1 {
            return Err(TransformError::MonotonicityViolation {
                detail: format!("two different values {h0} and {h1} are listed at a = {a0}"),
            });
        }
        if h1 < h0 {
            return Err(TransformError::MonotonicityViolation {
                detail: format!("h drops from {h0} at a = {a0} to {h1} at a = {a1}"),
            });
        }
    }
    let first = sorted[0];
    let last = sorted[sorted.len() - 1];
    if first != (0.0, 0.0) {
        return Err(TransformError::EndpointViolation {
            detail: format!("table must start at (0, 0), found ({}, {})", first.0, first.1),
        });
    }
    if last != (1.0, 1.0) {
        return Err(TransformError::EndpointViolation {
            detail: format!("table must end at (1, 1), found ({}, {})", last.0, last.1),
        });
    }
    Ok(sorted)
}

/// Linear interpolation through sorted table points; exact at the points.
fn interpolate(points: &[(f64, f64)], a: f64) -> f64 {
    match points.binary_search_by(|p| p.0.total_cmp(&a)) {
        Ok(i) => points[i].1,
        Err(i) => {
            // A valid table spans [0, 1], so i here is interior: 0 < i < len.
            let (a0, h0) = points[i - 1];
            let (a1, h1) = points[i];
            h0 + (a - a0) / (a1 - a0) * (h1 - h0)
        }
    }
}
