//! Core domain types: trial rows, validated datasets, γ values, and analysis
//! configuration.
//!
//! The central contract is [`TrialDataset`]: once a dataset has passed
//! [`validate_dataset`], every estimator in this crate can consume it without
//! re-checking structural invariants (arms non-empty, engagement in range,
//! control engagement structurally zero, outcomes finite, covariate arity
//! consistent).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::TransformSpec;

/// Errors raised while validating rows, γ values, or configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// An arm has zero rows — positivity is violated.
    #[error("the {arm} arm has no rows")]
    EmptyArm { arm: &'static str },
    /// Engagement outside [0, 1].
    #[error("row {row}: engagement {a} is outside [0, 1]")]
    OutOfRangeEngagement { row: usize, a: f64 },
    /// A control-arm subject reports positive engagement.
    #[error("row {row}: control-arm engagement {a} must be zero (control subjects cannot engage)")]
    ControlEngagement { row: usize, a: f64 },
    /// A treated-arm row has no engagement value.
    #[error("row {row}: intervention-arm engagement is missing")]
    MissingEngagement { row: usize },
    /// Outcome is NaN or infinite.
    #[error("row {row}: outcome is not finite")]
    NonFiniteOutcome { row: usize },
    /// A covariate value is NaN or infinite.
    #[error("row {row}: covariate {column} is not finite")]
    NonFiniteCovariate { row: usize, column: usize },
    /// Rows disagree on how many covariates they carry.
    #[error("row {row}: expected {expected} covariates, found {found}")]
    CovariateArityMismatch { row: usize, expected: usize, found: usize },
    /// Every treated subject has zero engagement, so μ_h = 0 for any valid
    /// transform and the instrument carries no information.
    #[error("every intervention-arm row has zero engagement; the instrument is uninformative")]
    ZeroInstrument,
    /// A γ value outside [0, 1].
    #[error("gamma {value} is outside [0, 1]")]
    InvalidGamma { value: f64 },
    /// An analysis configuration that cannot be executed as requested.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One candidate record parsed from external input, before validation.
///
/// Control-arm engagement may be absent (`a: None`); it is coerced to the
/// structural zero during validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// Randomized arm: `false` = control, `true` = intervention.
    pub z: bool,
    /// Engagement proportion in [0, 1], if recorded.
    pub a: Option<f64>,
    /// Continuous outcome, in application units.
    pub y: f64,
    /// Baseline covariates, in dataset column order.
    pub covariates: Vec<f64>,
}

/// One validated trial record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    /// Randomized arm: `false` = control, `true` = intervention.
    pub z: bool,
    /// Engagement proportion in [0, 1]; exactly 0 for control rows.
    pub a: f64,
    /// Continuous outcome.
    pub y: f64,
    /// Baseline covariates, matching the dataset's covariate names.
    pub covariates: Vec<f64>,
}

/// A validated dataset. Construct with [`validate_dataset`]; immutable
/// afterwards, so it is safe to share read-only across parallel workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    rows: Vec<TrialRow>,
    covariate_names: Vec<String>,
}

impl TrialDataset {
    /// All rows, in input order.
    pub fn rows(&self) -> &[TrialRow] {
        &self.rows
    }

    /// Covariate column labels.
    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Total sample size N.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Intervention-arm size N₁.
    pub fn n_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.z).count()
    }

    /// Control-arm size N₀.
    pub fn n_control(&self) -> usize {
        self.rows.iter().filter(|r| !r.z).count()
    }

    /// Outcomes of one arm.
    pub fn outcomes(&self, treated: bool) -> Vec<f64> {
        self.rows.iter().filter(|r| r.z == treated).map(|r| r.y).collect()
    }

    /// Engagement values of the intervention arm.
    pub fn treated_engagement(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.z).map(|r| r.a).collect()
    }

    /// Index of a covariate column by name.
    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    /// Values of one covariate column across all rows.
    pub fn covariate_column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.covariates[index]).collect()
    }

    /// Assemble a dataset from rows already known to satisfy the row-level
    /// invariants, skipping arm-structure checks. Bootstrap resamples use
    /// this: a resample may transiently violate positivity, which the
    /// estimators then detect and report as a degenerate resample.
    pub(crate) fn from_parts_unchecked(rows: Vec<TrialRow>, covariate_names: Vec<String>) -> Self {
        TrialDataset { rows, covariate_names }
    }
}

/// Validate candidate records into a [`TrialDataset`].
///
/// Checks, in order per row: covariate arity, engagement presence/range,
/// the control-arm structural zero (missing control engagement is coerced to
/// 0), outcome and covariate finiteness. Dataset-level checks follow: both
/// arms non-empty and at least one treated row with positive engagement.
///
/// Validation is idempotent: re-validating the rows of a valid dataset
/// returns an identical dataset.
pub fn validate_dataset(
    raw: Vec<RawRow>,
    covariate_names: Vec<String>,
) -> Result<TrialDataset, ModelError> {
    let arity = covariate_names.len();
    let mut rows = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        if r.covariates.len() != arity {
            return Err(ModelError::CovariateArityMismatch {
                row: i,
                expected: arity,
                found: r.covariates.len(),
            });
        }
        let a = match (r.z, r.a) {
            (false, None) => 0.0, // structural zero for control subjects
            (true, None) => return Err(ModelError::MissingEngagement { row: i }),
            (_, Some(a)) => a,
        };
        if !a.is_finite() || !(0.0..=1.0).contains(&a) {
            return Err(ModelError::OutOfRangeEngagement { row: i, a });
        }
        if !r.z && a > 0.0 {
            return Err(ModelError::ControlEngagement { row: i, a });
        }
        if !r.y.is_finite() {
            return Err(ModelError::NonFiniteOutcome { row: i });
        }
        if let Some(j) = r.covariates.iter().position(|c| !c.is_finite()) {
            return Err(ModelError::NonFiniteCovariate { row: i, column: j });
        }
        rows.push(TrialRow { z: r.z, a, y: r.y, covariates: r.covariates });
    }

    if !rows.iter().any(|r| !r.z) {
        return Err(ModelError::EmptyArm { arm: "control" });
    }
    if !rows.iter().any(|r| r.z) {
        return Err(ModelError::EmptyArm { arm: "intervention" });
    }
    if !rows.iter().any(|r| r.z && r.a > 0.0) {
        return Err(ModelError::ZeroInstrument);
    }

    Ok(TrialDataset { rows, covariate_names })
}

/// A sensitivity parameter γ ∈ [0, 1]: the assumed ratio of the
/// zero-engagement effect to the full-engagement effect.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct GammaValue(f64);

impl GammaValue {
    /// γ = 0: the classical exclusion-restriction analysis.
    pub const ZERO: GammaValue = GammaValue(0.0);
    /// γ = 1: effects do not vary with engagement (the ITT reading).
    pub const ONE: GammaValue = GammaValue(1.0);

    /// Construct a γ value, rejecting anything outside [0, 1].
    pub fn new(value: f64) -> Result<Self, ModelError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(GammaValue(value))
        } else {
            Err(ModelError::InvalidGamma { value })
        }
    }

    /// The underlying value.
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for GammaValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl<'de> Deserialize<'de> for GammaValue {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        GammaValue::new(v).map_err(serde::de::Error::custom)
    }
}

/// Which intention-to-treat estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IttMethod {
    /// Arm-mean difference with the two-sample variance.
    DiffMeans,
    /// Least squares on (intercept, z, adjustment columns) with a
    /// heteroskedasticity-robust variance.
    OlsAdjusted,
}

impl std::fmt::Display for IttMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IttMethod::DiffMeans => write!(f, "diff_means"),
            IttMethod::OlsAdjusted => write!(f, "ols_adjusted"),
        }
    }
}

/// How knots are chosen for a spline adjustment term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPolicy {
    /// Knots at the three inner quartiles of the column's empirical
    /// distribution (recomputed per bootstrap resample).
    Quartiles,
    /// Fixed, strictly ascending knot locations.
    Explicit(Vec<f64>),
}

/// One covariate entering the adjustment through a restricted cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineTerm {
    /// Covariate column name.
    pub column: String,
    /// Knot selection policy.
    pub policy: KnotPolicy,
}

/// Covariate adjustment specification: plain linear columns plus optional
/// spline-expanded columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Adjustment {
    /// Columns entering linearly.
    pub columns: Vec<String>,
    /// Columns entering through a restricted cubic spline basis.
    pub splines: Vec<SplineTerm>,
}

impl Adjustment {
    /// No covariate adjustment.
    pub fn none() -> Self {
        Adjustment::default()
    }

    /// A single column entering linearly.
    pub fn linear(column: &str) -> Self {
        Adjustment { columns: vec![column.to_string()], splines: Vec::new() }
    }

    /// Whether any adjustment term is present.
    pub fn is_empty(&self) -> bool {
        self.columns.is_empty() && self.splines.is_empty()
    }
}

/// Everything needed to run one analysis: grids, transform, estimator
/// choices, bootstrap size, confidence level, and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Sensitivity values γ to evaluate.
    pub gamma_grid: Vec<GammaValue>,
    /// Engagement levels a to evaluate.
    pub a_grid: Vec<f64>,
    /// Engagement transform h(·).
    pub transform: TransformSpec,
    /// Intention-to-treat estimator.
    pub itt_method: IttMethod,
    /// Covariate adjustment (must be empty for [`IttMethod::DiffMeans`]).
    pub adjustment: Adjustment,
    /// Number of bootstrap replicates B (≥ 2).
    pub bootstrap_reps: usize,
    /// Two-sided confidence level, e.g. 0.95.
    pub ci_level: f64,
    /// Master seed for all resampling.
    pub seed: u64,
}

impl Default for AnalysisConfig {
    /// Identity transform, difference-in-means, the conventional γ grid
    /// {0, 0.25, 0.5, 0.75, 1} and a matching five-point a grid, B = 500
    /// bootstrap replicates at the 95% level. Callers typically replace
    /// `a_grid` after estimating μ̂_h (the CLI's `auto` grid is
    /// {0, 0.25, μ̂_h, 1}).
    fn default() -> Self {
        let gamma_grid =
            [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&g| GammaValue::new(g).unwrap()).collect();
        AnalysisConfig {
            gamma_grid,
            a_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            transform: TransformSpec::Identity,
            itt_method: IttMethod::DiffMeans,
            adjustment: Adjustment::none(),
            bootstrap_reps: 500,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

impl AnalysisConfig {
    /// Check the configuration invariants: grids inside [0, 1], B ≥ 2,
    /// level strictly inside (0, 1), adjustment consistent with the ITT
    /// method, and a valid transform.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gamma_grid.is_empty() {
            return Err(ModelError::InvalidConfig("gamma grid is empty".into()));
        }
        if self.a_grid.is_empty() {
            return Err(ModelError::InvalidConfig("a grid is empty".into()));
        }
        if let Some(a) = self.a_grid.iter().find(|a| !a.is_finite() || !(0.0..=1.0).contains(*a)) {
            return Err(ModelError::InvalidConfig(format!("a grid value {a} is outside [0, 1]")));
        }
        if self.bootstrap_reps < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "bootstrap replicate count {} is below the minimum of 2",
                self.bootstrap_reps
            )));
        }
        if !self.ci_level.is_finite() || self.ci_level <= 0.0 || self.ci_level >= 1.0 {
            return Err(ModelError::InvalidConfig(format!(
                "confidence level {} must lie strictly inside (0, 1)",
                self.ci_level
            )));
        }
        if self.itt_method == IttMethod::DiffMeans && !self.adjustment.is_empty() {
            return Err(ModelError::InvalidConfig(
                "difference-in-means cannot honor covariate adjustment; use the least-squares \
                 estimator or drop the adjustment terms"
                    .into(),
            ));
        }
        self.transform
            .validate()
            .map_err(|e| ModelError::InvalidConfig(format!("transform: {e}")))?;
        Ok(())
    }
}
