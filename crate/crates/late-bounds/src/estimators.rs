//! Estimators for the identifiable ingredients of the sensitivity analysis:
//! the intention-to-treat contrast Δ_ITT (difference in means, or least
//! squares with covariate adjustment and a White-style robust variance) and
//! the treated-arm transformed-engagement mean μ_h.
//!
//! All asymptotic variances follow one convention: they are variances of the
//! √N-scaled estimator, with N the *total* sample size. Downstream variance
//! combinations rely on that single normalization.
//!
//! Restricted cubic splines use the truncated-power construction with linear
//! tails recommended by Harrell, with knots at the three inner quartiles by
//! default.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Adjustment, KnotPolicy, TrialDataset};
use crate::transform::{TransformError, TransformSpec};
use crate::util::{mean, quantile_linear, sample_variance};

/// Errors raised by the estimators in this module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    /// An arm has too few rows for a variance (needs ≥ 2).
    #[error("the {arm} arm has {n} rows; at least 2 are required")]
    DegenerateArm { arm: &'static str, n: usize },
    /// The regression design matrix is collinear.
    #[error("design matrix is rank deficient (rank {rank} of {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },
    /// No residual degrees of freedom (p ≥ N), so no robust variance exists.
    #[error("no residual degrees of freedom: {n} rows for {p} regression columns")]
    DegenerateResiduals { n: usize, p: usize },
    /// Too few distinct values to place quartile knots.
    #[error("{distinct} distinct values; quartile knots need at least 4 and strictly ascending quartiles")]
    TooFewDistinct { distinct: usize },
    /// Spline knots must be strictly ascending.
    #[error("spline knots must be strictly ascending")]
    KnotsNotAscending,
    /// Restricted cubic splines need at least three knots.
    #[error("restricted cubic spline needs at least 3 knots, got {k}")]
    TooFewKnots { k: usize },
    /// The transformed engagement mean is zero, so the engagement-indexed
    /// effect scale is undefined for this transform.
    #[error("transformed engagement is zero for every intervention-arm row; \
             mu_h = 0 leaves the effect scale undefined")]
    ZeroInstrument,
    /// An adjustment term references a column the dataset does not have.
    #[error("unknown covariate column `{column}`")]
    UnknownColumn { column: String },
    /// Transform evaluation failed.
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// An intention-to-treat estimate with its √N-scaled asymptotic variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IttEstimate {
    /// Δ̂_ITT, in outcome units.
    pub delta_itt: f64,
    /// Asymptotic variance of √N(Δ̂_ITT − Δ_ITT).
    pub sigma2_itt: f64,
    /// Which estimator produced this.
    pub method: crate::model::IttMethod,
    /// Total sample size N.
    pub n_total: usize,
}

/// The treated-arm mean of transformed engagement with its √N-scaled
/// asymptotic variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuHEstimate {
    /// μ̂_h ∈ [0, 1].
    pub mu_h: f64,
    /// Asymptotic variance of √N(μ̂_h − μ_h), N the total sample size.
    pub sigma2_h: f64,
    /// Intervention-arm count N₁.
    pub n1: usize,
}

/// A restricted cubic spline basis evaluated on a data column.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    /// Strictly ascending knot locations.
    pub knots: Vec<f64>,
    /// Basis columns: the linear column first, then the k−2 restricted
    /// cubic columns. Each inner vector has one entry per input point.
    pub columns: Vec<Vec<f64>>,
}

/// Difference in arm means with the two-sample variance.
///
/// `sigma2_itt = N·(s₁²/N₁ + s₀²/N₀)` with `s²` the arm sample variances
/// (divisor n−1), so the reported variance is for the √N-scaled estimator.
pub fn itt_diff_means(data: &TrialDataset) -> Result<IttEstimate, EstimatorError> {
    let y1 = data.outcomes(true);
    let y0 = data.outcomes(false);
    if y1.len() < 2 {
        return Err(EstimatorError::DegenerateArm { arm: "intervention", n: y1.len() });
    }
    if y0.len() < 2 {
        return Err(EstimatorError::DegenerateArm { arm: "control", n: y0.len() });
    }
    let n = data.n() as f64;
    let delta_itt = mean(&y1) - mean(&y0);
    let sigma2_itt =
        n * (sample_variance(&y1) / y1.len() as f64 + sample_variance(&y0) / y0.len() as f64);
    Ok(IttEstimate {
        delta_itt,
        sigma2_itt,
        method: crate::model::IttMethod::DiffMeans,
        n_total: data.n(),
    })
}

/// Build the regression design matrix `(1, z, adjustment columns)` and its
/// column labels.
///
/// Linear terms contribute one column each; spline terms contribute a
/// restricted cubic basis (quartile knots are recomputed from the column's
/// current values, so resampled datasets get resampled knots).
pub fn design_matrix(
    data: &TrialDataset,
    adjustment: &Adjustment,
) -> Result<(DMatrix<f64>, Vec<String>), EstimatorError> {
    let n = data.n();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<String> = Vec::new();

    columns.push(vec![1.0; n]);
    labels.push("intercept".to_string());
    columns.push(data.rows().iter().map(|r| if r.z { 1.0 } else { 0.0 }).collect());
    labels.push("z".to_string());

    for name in &adjustment.columns {
        let idx = data
            .covariate_index(name)
            .ok_or_else(|| EstimatorError::UnknownColumn { column: name.clone() })?;
        columns.push(data.covariate_column(idx));
        labels.push(name.clone());
    }
    for term in &adjustment.splines {
        let idx = data
            .covariate_index(&term.column)
            .ok_or_else(|| EstimatorError::UnknownColumn { column: term.column.clone() })?;
        let x = data.covariate_column(idx);
        let knots = match &term.policy {
            KnotPolicy::Quartiles => {
                let (q1, q2, q3) = quartile_knots(&x)?;
                vec![q1, q2, q3]
            }
            KnotPolicy::Explicit(k) => k.clone(),
        };
        let basis = rcs_basis(&x, &knots)?;
        for (j, col) in basis.columns.into_iter().enumerate() {
            columns.push(col);
            labels.push(format!("{}:rcs{}", term.column, j));
        }
    }

    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    Ok((x, labels))
}

/// Least squares of y on `(1, z, adjustment)` with an HC1-style
/// heteroskedasticity-robust variance for the z coefficient.
///
/// The point estimate is consistent for Δ_ITT under randomization whatever
/// the adjustment's functional form; the robust variance stays valid under
/// that same misspecification, which a model-based variance would not.
pub fn itt_ols(
    data: &TrialDataset,
    adjustment: &Adjustment,
) -> Result<IttEstimate, EstimatorError> {
    let (x, _labels) = design_matrix(data, adjustment)?;
    let n = x.nrows();
    let p = x.ncols();
    if n <= p {
        return Err(EstimatorError::DegenerateResiduals { n, p });
    }
    let y = DVector::from_iterator(n, data.rows().iter().map(|r| r.y));

    let svd = x.clone().svd(true, true);
    let leading = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = 1e-10 * leading;
    let rank = svd.rank(eps);
    if rank < p {
        return Err(EstimatorError::RankDeficient { rank, columns: p });
    }
    let beta = svd
        .solve(&y, eps)
        .map_err(|_| EstimatorError::RankDeficient { rank, columns: p })?;

    // (XᵀX)⁻¹ from the SVD factors: V Σ⁻² Vᵀ.
    let v_t = svd.v_t.as_ref().expect("SVD computed with v_t");
    let s_inv2 = DVector::from_iterator(p, svd.singular_values.iter().map(|s| 1.0 / (s * s)));
    let xtx_inv = v_t.transpose() * DMatrix::from_diagonal(&s_inv2) * v_t;

    let residuals = &y - &x * &beta;
    // Sandwich meat Σ eᵢ² xᵢxᵢᵀ, built by scaling each design row by its
    // residual.
    let mut xe = x.clone();
    for i in 0..n {
        let e = residuals[i];
        for j in 0..p {
            xe[(i, j)] *= e;
        }
    }
    let meat = xe.transpose() * &xe;
    let small_sample = n as f64 / (n - p) as f64;
    let cov = &xtx_inv * meat * &xtx_inv * small_sample;

    Ok(IttEstimate {
        delta_itt: beta[1],
        sigma2_itt: n as f64 * cov[(1, 1)],
        method: crate::model::IttMethod::OlsAdjusted,
        n_total: n,
    })
}

/// The three inner quartiles (0.25, 0.50, 0.75 empirical quantiles, linear
/// interpolation definition), for use as default spline knots.
///
/// Requires at least 4 distinct values, and the computed quartiles must be
/// strictly ascending (heavy ties can collapse them even with 4 distinct
/// values present).
pub fn quartile_knots(x: &[f64]) -> Result<(f64, f64, f64), EstimatorError> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = if sorted.is_empty() { 0 } else { 1 };
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < 4 {
        return Err(EstimatorError::TooFewDistinct { distinct });
    }
    let q1 = quantile_linear(&sorted, 0.25);
    let q2 = quantile_linear(&sorted, 0.50);
    let q3 = quantile_linear(&sorted, 0.75);
    if !(q1 < q2 && q2 < q3) {
        return Err(EstimatorError::TooFewDistinct { distinct });
    }
    Ok((q1, q2, q3))
}

/// Evaluate the restricted (natural) cubic spline basis on `x`.
///
/// For k knots t₁ < … < t_k the basis has k−1 columns: the linear column x,
/// then for j = 1..k−2 the column
///
/// ```text
/// [ (x−t_j)₊³ − (x−t_{k−1})₊³ (t_k−t_j)/(t_k−t_{k−1})
///             + (x−t_k)₊³ (t_{k−1}−t_j)/(t_k−t_{k−1}) ] / (t_k−t₁)²
/// ```
///
/// The cubic terms cancel beyond the boundary knots, so any fitted function
/// is linear in both tails.
pub fn rcs_basis(x: &[f64], knots: &[f64]) -> Result<SplineBasis, EstimatorError> {
    let k = knots.len();
    if k < 3 {
        return Err(EstimatorError::TooFewKnots { k });
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|t| !t.is_finite()) {
        return Err(EstimatorError::KnotsNotAscending);
    }
    let t_first = knots[0];
    let t_last = knots[k - 1];
    let t_penult = knots[k - 2];
    let span2 = (t_last - t_first).powi(2);
    let p3 = |v: f64| v.max(0.0).powi(3);

    let mut columns = Vec::with_capacity(k - 1);
    columns.push(x.to_vec());
    for &t_j in &knots[..k - 2] {
        let col = x
            .iter()
            .map(|&xi| {
                (p3(xi - t_j) - p3(xi - t_penult) * (t_last - t_j) / (t_last - t_penult)
                    + p3(xi - t_last) * (t_penult - t_j) / (t_last - t_penult))
                    / span2
            })
            .collect();
        columns.push(col);
    }
    Ok(SplineBasis { knots: knots.to_vec(), columns })
}

/// Mean transformed engagement in the intervention arm, with the √N-scaled
/// variance `sigma2_h = (N/N₁) · sample variance of h(a)`.
pub fn mu_h_estimate(
    data: &TrialDataset,
    spec: &TransformSpec,
) -> Result<MuHEstimate, EstimatorError> {
    let h: Vec<f64> =
        data.treated_engagement().iter().map(|&a| spec.apply(a)).collect::<Result<_, _>>()?;
    if h.len() < 2 {
        return Err(EstimatorError::DegenerateArm { arm: "intervention", n: h.len() });
    }
    let mu_h = mean(&h);
    if mu_h == 0.0 {
        return Err(EstimatorError::ZeroInstrument);
    }
    let n = data.n() as f64;
    let n1 = h.len();
    let sigma2_h = (n / n1 as f64) * sample_variance(&h);
    Ok(MuHEstimate { mu_h, sigma2_h, n1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_dataset, Adjustment, RawRow};
    use approx::assert_abs_diff_eq;

    fn dataset(rows: Vec<(bool, f64, f64)>) -> TrialDataset {
        validate_dataset(
            rows.into_iter()
                .map(|(z, a, y)| RawRow { z, a: Some(a), y, covariates: Vec::new() })
                .collect(),
            Vec::new(),
        )
        .unwrap()
    }

    fn dataset_with_l(rows: Vec<(bool, f64, f64, f64)>) -> TrialDataset {
        validate_dataset(
            rows.into_iter()
                .map(|(z, a, y, l)| RawRow { z, a: Some(a), y, covariates: vec![l] })
                .collect(),
            vec!["l".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn diff_means_hand_oracle() {
        // y|z=1 = {7, 9}, y|z=0 = {8, 10}: Δ = −1, σ² = 4·(2/2 + 2/2) = 8.
        let data = dataset(vec![
            (true, 0.5, 7.0),
            (true, 0.5, 9.0),
            (false, 0.0, 8.0),
            (false, 0.0, 10.0),
        ]);
        let est = itt_diff_means(&data).unwrap();
        assert_abs_diff_eq!(est.delta_itt, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.sigma2_itt, 8.0, epsilon = 1e-12);
        assert_eq!(est.n_total, 4);
    }

    #[test]
    fn diff_means_constant_arms_have_zero_variance() {
        let data = dataset(vec![
            (true, 0.5, 8.0),
            (true, 0.5, 8.0),
            (false, 0.0, 9.0),
            (false, 0.0, 9.0),
        ]);
        let est = itt_diff_means(&data).unwrap();
        assert_abs_diff_eq!(est.delta_itt, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.sigma2_itt, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn diff_means_equal_arms_give_zero() {
        let data = dataset(vec![
            (true, 0.5, 3.0),
            (true, 0.5, 5.0),
            (false, 0.0, 5.0),
            (false, 0.0, 3.0),
        ]);
        assert_abs_diff_eq!(itt_diff_means(&data).unwrap().delta_itt, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn diff_means_needs_two_rows_per_arm() {
        let data = dataset(vec![(true, 0.5, 7.0), (false, 0.0, 8.0), (false, 0.0, 10.0)]);
        assert!(matches!(
            itt_diff_means(&data),
            Err(EstimatorError::DegenerateArm { arm: "intervention", n: 1 })
        ));
    }

    #[test]
    fn ols_with_empty_adjustment_matches_diff_means() {
        let data = dataset_with_l(vec![
            (true, 0.3, 7.1, 0.2),
            (true, 0.9, 9.4, -1.1),
            (true, 0.5, 8.2, 0.7),
            (false, 0.0, 8.3, 0.0),
            (false, 0.0, 10.6, 1.4),
            (false, 0.0, 9.9, -0.3),
        ]);
        let dm = itt_diff_means(&data).unwrap();
        let ols = itt_ols(&data, &Adjustment::none()).unwrap();
        assert_abs_diff_eq!(ols.delta_itt, dm.delta_itt, epsilon = 1e-10);
    }

    #[test]
    fn ols_exact_linear_fit_has_zero_residuals() {
        // y = 2 + 0·z + 3·ℓ exactly.
        let data = dataset_with_l(vec![
            (true, 0.5, 2.0 + 3.0 * 0.1, 0.1),
            (true, 0.5, 2.0 + 3.0 * 0.9, 0.9),
            (true, 0.5, 2.0 + 3.0 * 0.4, 0.4),
            (false, 0.0, 2.0 + 3.0 * 0.5, 0.5),
            (false, 0.0, 2.0 + 3.0 * 0.2, 0.2),
            (false, 0.0, 2.0 + 3.0 * 0.8, 0.8),
        ]);
        let est = itt_ols(&data, &Adjustment::linear("l")).unwrap();
        assert_abs_diff_eq!(est.delta_itt, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(est.sigma2_itt, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn ols_rejects_collinear_design() {
        // A constant covariate duplicates the intercept.
        let data = dataset_with_l(vec![
            (true, 0.5, 7.0, 1.0),
            (true, 0.5, 9.0, 1.0),
            (false, 0.0, 8.0, 1.0),
            (false, 0.0, 10.0, 1.0),
        ]);
        assert!(matches!(
            itt_ols(&data, &Adjustment::linear("l")),
            Err(EstimatorError::RankDeficient { .. })
        ));
    }

    #[test]
    fn ols_rejects_unknown_column() {
        let data = dataset(vec![(true, 0.5, 7.0), (true, 0.5, 9.0), (false, 0.0, 8.0), (false, 0.0, 10.0)]);
        assert!(matches!(
            itt_ols(&data, &Adjustment::linear("missing")),
            Err(EstimatorError::UnknownColumn { .. })
        ));
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_design_columns() {
        let data = dataset_with_l(vec![
            (true, 0.3, 7.13, 0.21),
            (true, 0.9, 9.42, -1.17),
            (true, 0.5, 8.25, 0.73),
            (true, 0.7, 8.91, 0.15),
            (false, 0.0, 8.38, 0.02),
            (false, 0.0, 10.64, 1.44),
            (false, 0.0, 9.97, -0.38),
            (false, 0.0, 9.01, 0.66),
        ]);
        let (x, _) = design_matrix(&data, &Adjustment::linear("l")).unwrap();
        let est = itt_ols(&data, &Adjustment::linear("l")).unwrap();
        // Re-derive β and residuals the same way and check Xᵀe ≈ 0.
        let y = DVector::from_iterator(data.n(), data.rows().iter().map(|r| r.y));
        let svd = x.clone().svd(true, true);
        let eps = 1e-10 * svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let beta = svd.solve(&y, eps).unwrap();
        assert_abs_diff_eq!(beta[1], est.delta_itt, epsilon = 1e-12);
        let residuals = &y - &x * beta;
        let scale = y.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
        let xt_e = x.transpose() * residuals;
        for v in xt_e.iter() {
            assert!(v.abs() < 1e-8 * scale, "residual–column inner product {v}");
        }
    }

    #[test]
    fn quartile_knots_match_order_statistics() {
        assert_eq!(quartile_knots(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), (2.0, 3.0, 4.0));
        // A permutation of 1..=101 has exact integer quartiles.
        let mut x: Vec<f64> = (1..=101).map(f64::from).collect();
        x.reverse();
        x.swap(3, 47);
        assert_eq!(quartile_knots(&x).unwrap(), (26.0, 51.0, 76.0));
    }

    #[test]
    fn quartile_knots_reject_degenerate_inputs() {
        assert!(matches!(
            quartile_knots(&[2.0; 40]),
            Err(EstimatorError::TooFewDistinct { distinct: 1 })
        ));
        assert!(matches!(
            quartile_knots(&[1.0, 2.0, 3.0]),
            Err(EstimatorError::TooFewDistinct { distinct: 3 })
        ));
        // Four distinct values but ties collapse the quartiles.
        let mut heavy = vec![5.0; 100];
        heavy.extend_from_slice(&[1.0, 2.0, 3.0]);
        assert!(matches!(quartile_knots(&heavy), Err(EstimatorError::TooFewDistinct { .. })));
    }

    #[test]
    fn rcs_basis_has_k_minus_one_columns_and_linear_tails() {
        let knots = [0.25, 0.5, 0.75];
        let x: Vec<f64> = (0..=400).map(|i| i as f64 / 100.0 - 2.0).collect(); // −2..2
        let basis = rcs_basis(&x, &knots).unwrap();
        assert_eq!(basis.columns.len(), 2);
        // Left of the first knot every nonlinear column is exactly zero.
        for (xi, v) in x.iter().zip(&basis.columns[1]) {
            if *xi < 0.25 {
                assert_eq!(*v, 0.0);
            }
        }
        // Right of the last knot the second finite differences vanish.
        let h = 0.01;
        let grid: Vec<f64> = (0..100).map(|i| 0.8 + i as f64 * h).collect();
        let b = rcs_basis(&grid, &knots).unwrap();
        for col in &b.columns {
            for w in col.windows(3) {
                let second = w[2] - 2.0 * w[1] + w[0];
                assert!(second.abs() < 1e-8, "second difference {second}");
            }
        }
    }

    #[test]
    fn rcs_basis_rejects_bad_knots() {
        assert!(matches!(rcs_basis(&[0.0], &[0.1, 0.5]), Err(EstimatorError::TooFewKnots { k: 2 })));
        assert!(matches!(
            rcs_basis(&[0.0], &[0.1, 0.5, 0.5]),
            Err(EstimatorError::KnotsNotAscending)
        ));
    }

    #[test]
    fn mu_h_two_point_mean() {
        let data = dataset(vec![
            (true, 0.5, 1.0),
            (true, 1.0, 1.0),
            (false, 0.0, 1.0),
            (false, 0.0, 1.0),
        ]);
        let est = mu_h_estimate(&data, &TransformSpec::Identity).unwrap();
        assert_abs_diff_eq!(est.mu_h, 0.75, epsilon = 1e-12);
        assert_eq!(est.n1, 2);
        // sigma2_h = (4/2) · var({0.5, 1.0}) = 2 · 0.125 = 0.25.
        assert_abs_diff_eq!(est.sigma2_h, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn mu_h_constant_transform_values() {
        let data = dataset(vec![
            (true, 0.9, 1.0),
            (true, 0.9, 1.0),
            (true, 0.9, 1.0),
            (false, 0.0, 1.0),
            (false, 0.0, 1.0),
        ]);
        let spec = TransformSpec::threshold(0.8).unwrap();
        let est = mu_h_estimate(&data, &spec).unwrap();
        assert_abs_diff_eq!(est.mu_h, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.sigma2_h, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mu_h_matches_a_response_rate_style_mean() {
        // An arm whose mean engagement is 0.814 reports exactly that under
        // the identity transform.
        let data = dataset(vec![
            (true, 0.814 - 0.1, 1.0),
            (true, 0.814 + 0.1, 1.0),
            (false, 0.0, 1.0),
            (false, 0.0, 1.0),
        ]);
        let est = mu_h_estimate(&data, &TransformSpec::Identity).unwrap();
        assert_abs_diff_eq!(est.mu_h, 0.814, epsilon = 1e-12);
    }

    #[test]
    fn mu_h_zero_under_transform_is_zero_instrument() {
        // Engagement is positive, but a high threshold maps it all to zero.
        let data = dataset(vec![
            (true, 0.5, 1.0),
            (true, 0.6, 1.0),
            (false, 0.0, 1.0),
            (false, 0.0, 1.0),
        ]);
        let spec = TransformSpec::threshold(0.8).unwrap();
        assert!(matches!(mu_h_estimate(&data, &spec), Err(EstimatorError::ZeroInstrument)));
    }

    #[test]
    fn variances_are_invariant_to_row_order() {
        let rows = vec![
            (true, 0.3, 7.1, 0.2),
            (true, 0.9, 9.4, -1.1),
            (true, 0.5, 8.2, 0.7),
            (false, 0.0, 8.3, 0.0),
            (false, 0.0, 10.6, 1.4),
            (false, 0.0, 9.9, -0.3),
        ];
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.swap(1, 4);
        let d1 = dataset_with_l(rows);
        let d2 = dataset_with_l(shuffled);
        let e1 = itt_diff_means(&d1).unwrap();
        let e2 = itt_diff_means(&d2).unwrap();
        assert_abs_diff_eq!(e1.sigma2_itt, e2.sigma2_itt, epsilon = 1e-10);
        let m1 = mu_h_estimate(&d1, &TransformSpec::Identity).unwrap();
        let m2 = mu_h_estimate(&d2, &TransformSpec::Identity).unwrap();
        assert_abs_diff_eq!(m1.sigma2_h, m2.sigma2_h, epsilon = 1e-10);
    }

    #[test]
    fn spline_adjustment_builds_full_design() {
        // 12 rows, spline on l with quartile knots: design should be
        // intercept + z + 2 spline columns (3 knots) and stay full rank.
        let rows: Vec<(bool, f64, f64, f64)> = (0..12)
            .map(|i| {
                let l = i as f64 / 11.0;
                let z = i % 2 == 0;
                let a = if z { 0.4 + 0.05 * (i % 3) as f64 } else { 0.0 };
                (z, a, 5.0 + l * l + if z { -0.4 } else { 0.0 }, l)
            })
            .collect();
        let data = dataset_with_l(rows);
        let adj = Adjustment {
            columns: Vec::new(),
            splines: vec![crate::model::SplineTerm {
                column: "l".to_string(),
                policy: KnotPolicy::Quartiles,
            }],
        };
        let (x, labels) = design_matrix(&data, &adj).unwrap();
        assert_eq!(labels, vec!["intercept", "z", "l:rcs0", "l:rcs1"]);
        assert_eq!(x.ncols(), 4);
        assert!(itt_ols(&data, &adj).is_ok());
    }
}
