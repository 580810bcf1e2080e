//! Structured analysis report: the JSON schema emitted by `analyze` and the
//! builder that assembles it from estimation output.

use late_bounds::{
    engagement_for_effect_threshold, gamma_for_xi_threshold, late_estimate, se_lst, var_late,
    wald, xi, AnalysisConfig, BootstrapResult, EngagementSolution, GammaValue, IttEstimate,
    IttMethod, LateError, LatePoint, MuHEstimate, ReportPlan, TrialDataset, VarianceBundle,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// ITT block: point estimate plus large-sample and bootstrap uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IttSection {
    #[serde(flatten)]
    pub estimate: IttEstimate,
    pub se: f64,
    pub se_boot: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// `None` when the sampling variance is exactly zero (degenerate data).
    pub wald_statistic: Option<f64>,
    pub p_value: Option<f64>,
}

/// Mean-engagement block for the treated arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuHSection {
    #[serde(flatten)]
    pub estimate: MuHEstimate,
    pub se: f64,
    pub se_boot: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// One (gamma, a) cell: point estimate, bounds, variances, intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    #[serde(flatten)]
    pub point: LatePoint,
    #[serde(flatten)]
    pub variance: VarianceBundle,
    pub se_boot: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// `None` where the test is undefined (zero variance, e.g. the
    /// structural-zero cell at gamma = 0, h(a) = 0).
    pub wald_statistic: Option<f64>,
    pub p_value: Option<f64>,
    /// True for cells whose value is fixed by convention rather than
    /// estimated: at gamma = 0 and h(a) = 0 the effect is identically zero.
    pub convention: bool,
}

/// One row of the never-takers effect table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiRow {
    pub gamma: f64,
    pub xi: f64,
    pub se: f64,
    pub se_boot: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// `a*` solution for one gamma at the requested effect threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AStarCell {
    pub gamma: f64,
    pub solution: Option<EngagementSolution>,
}

/// Threshold solver output; populated only when the matching flag was given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub xi_threshold: Option<f64>,
    pub gamma_star: Option<GammaValue>,
    pub effect_threshold: Option<f64>,
    pub a_star: Vec<AStarCell>,
}

/// Run provenance: configuration, input digest, and timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub created_at: String,
    pub seed: u64,
    pub bootstrap_reps: usize,
    pub bootstrap_redraws: usize,
    pub ci_level: f64,
    pub transform: String,
    pub itt_method: IttMethod,
    pub adjust: Vec<String>,
    pub splines: Vec<String>,
    pub gamma_grid: Vec<f64>,
    pub a_grid: Vec<f64>,
    pub n_total: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub input_path: String,
    pub input_sha256: String,
}

/// Complete analysis output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub itt: IttSection,
    pub mu_h: MuHSection,
    pub grid: Vec<GridCell>,
    pub xi_table: Vec<XiRow>,
    pub thresholds: Thresholds,
    pub metadata: Metadata,
}

/// Widen a percentile interval just enough to contain the point estimate.
///
/// With finite bootstrap replicates the empirical quantiles can, in rare
/// cases, exclude the point estimate by a hair; the report guarantees
/// containment, so the interval absorbs the point.
fn contain(lower: f64, upper: f64, point: f64) -> (f64, f64) {
    (lower.min(point), upper.max(point))
}

fn wald_opt(estimate: f64, tau2: f64, n: usize) -> (Option<f64>, Option<f64>) {
    match wald(estimate, tau2, n) {
        Ok(test) => (Some(test.statistic), Some(test.p_value)),
        Err(_) => (None, None),
    }
}

/// Escalate threshold-solver errors: a non-positive threshold is a usage
/// problem, anything else is an estimation failure.
fn threshold_err(err: LateError) -> CliError {
    match err {
        LateError::NonPositiveThreshold { .. } => CliError::Validation(err.to_string()),
        other => CliError::Estimation(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    data: &TrialDataset,
    config: &AnalysisConfig,
    plan: &ReportPlan,
    itt: &IttEstimate,
    mu: &MuHEstimate,
    boot: &BootstrapResult,
    xi_threshold: Option<f64>,
    effect_threshold: Option<f64>,
    input_path: &str,
    input_sha256: &str,
) -> Result<AnalysisReport, CliError> {
    let n = itt.n_total;
    let transform = &config.transform;
    let se = se_lst(itt, mu, plan, transform).map_err(|e| CliError::Estimation(e.to_string()))?;

    let mut idx = 0usize;
    let mut take = || {
        let i = idx;
        idx += 1;
        i
    };

    let itt_section = {
        let i = take();
        let (ci_lower, ci_upper) = contain(boot.ci_lower[i], boot.ci_upper[i], itt.delta_itt);
        let (wald_statistic, p_value) = wald_opt(itt.delta_itt, itt.sigma2_itt, n);
        IttSection {
            estimate: *itt,
            se: se[i],
            se_boot: boot.se_boot[i],
            ci_lower,
            ci_upper,
            wald_statistic,
            p_value,
        }
    };

    let mu_section = {
        let i = take();
        let (ci_lower, ci_upper) = contain(boot.ci_lower[i], boot.ci_upper[i], mu.mu_h);
        MuHSection {
            estimate: *mu,
            se: se[i],
            se_boot: boot.se_boot[i],
            ci_lower,
            ci_upper,
        }
    };

    let mut grid = Vec::with_capacity(plan.gammas.len() * plan.a_grid.len());
    for gamma in &plan.gammas {
        for &a in &plan.a_grid {
            let point = late_estimate(itt, mu, *gamma, transform, a)
                .map_err(|e| CliError::Estimation(e.to_string()))?;
            let variance = var_late(itt, mu, *gamma, point.h_a)
                .map_err(|e| CliError::Estimation(e.to_string()))?;
            let i = take();
            let (ci_lower, ci_upper) = contain(boot.ci_lower[i], boot.ci_upper[i], point.delta);
            let (wald_statistic, p_value) = wald_opt(point.delta, variance.tau2, n);
            let convention = point.gamma.value() == 0.0 && point.h_a == 0.0;
            grid.push(GridCell {
                point,
                variance,
                se_boot: boot.se_boot[i],
                ci_lower,
                ci_upper,
                wald_statistic,
                p_value,
                convention,
            });
        }
    }

    let mut xi_table = Vec::with_capacity(plan.xi_gammas.len());
    for gamma in &plan.xi_gammas {
        let row = xi(itt, mu, *gamma).map_err(|e| CliError::Estimation(e.to_string()))?;
        let i = take();
        let (ci_lower, ci_upper) = contain(boot.ci_lower[i], boot.ci_upper[i], row.xi);
        xi_table.push(XiRow {
            gamma: row.gamma.value(),
            xi: row.xi,
            se: se[i],
            se_boot: boot.se_boot[i],
            ci_lower,
            ci_upper,
        });
    }

    let gamma_star = match xi_threshold {
        None => None,
        Some(t) => gamma_for_xi_threshold(itt, mu, t).map_err(threshold_err)?,
    };
    let mut a_star = Vec::new();
    if let Some(t) = effect_threshold {
        for gamma in &plan.gammas {
            let solution = engagement_for_effect_threshold(itt, mu, *gamma, transform, t)
                .map_err(threshold_err)?;
            a_star.push(AStarCell { gamma: gamma.value(), solution });
        }
    }

    let metadata = Metadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        seed: config.seed,
        bootstrap_reps: config.bootstrap_reps,
        bootstrap_redraws: boot.redraws,
        ci_level: config.ci_level,
        transform: config.transform.to_string(),
        itt_method: config.itt_method,
        adjust: config.adjustment.columns.clone(),
        splines: config
            .adjustment
            .splines
            .iter()
            .map(|s| format!("{}:{}", s.column, describe_policy(&s.policy)))
            .collect(),
        gamma_grid: config.gamma_grid.iter().map(|g| g.value()).collect(),
        a_grid: config.a_grid.clone(),
        n_total: data.n(),
        n_treated: data.n_treated(),
        n_control: data.n_control(),
        input_path: input_path.to_string(),
        input_sha256: input_sha256.to_string(),
    };

    Ok(AnalysisReport {
        itt: itt_section,
        mu_h: mu_section,
        grid,
        xi_table,
        thresholds: Thresholds { xi_threshold, gamma_star, effect_threshold, a_star },
        metadata,
    })
}

fn describe_policy(policy: &late_bounds::KnotPolicy) -> String {
    match policy {
        late_bounds::KnotPolicy::Quartiles => "quartiles".to_string(),
        late_bounds::KnotPolicy::Explicit(knots) => knots
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join(","),
    }
}

/// Long-format CSV of the grid (one row per (gamma, a) cell).
pub fn grid_csv(report: &AnalysisReport) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "gamma",
            "a",
            "h_a",
            "c_factor",
            "delta",
            "lower",
            "upper",
            "se_late",
            "se_boot",
            "ci_lo",
            "ci_hi",
            "wald",
            "p",
            "convention",
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    for cell in &report.grid {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writer
            .write_record([
                cell.point.gamma.to_string(),
                cell.point.a.to_string(),
                cell.point.h_a.to_string(),
                cell.point.c_factor.to_string(),
                cell.point.delta.to_string(),
                cell.point.lower_bound.to_string(),
                cell.point.upper_bound.to_string(),
                cell.variance.se_late.to_string(),
                cell.se_boot.to_string(),
                cell.ci_lower.to_string(),
                cell.ci_upper.to_string(),
                opt(cell.wald_statistic),
                opt(cell.p_value),
                cell.convention.to_string(),
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
