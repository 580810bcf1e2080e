//! Synthetic-trial engine: a semi-continuous engagement mechanism with an
//! unmeasured confounder, closed-form/quadrature oracles for the true
//! sensitivity parameter and instrument strength, and a parallel Monte Carlo
//! harness for bias and standard-error studies.
//!
//! The mechanism, per subject:
//!
//! ```text
//! U, L ~ N(0,1) independent        (U unmeasured, L observed)
//! Z ~ Bernoulli(p_z)
//! A^{z=1} | U = u:
//!   = 1                with probability expit(α01 + α11·u)
//!   = 0                else, with probability expit(α00 + α10·u)
//!   = expit(N(α0 + α1·u, σ_a²))   otherwise
//! A = Z·A^{z=1}                     (structural zero in control)
//! Y ~ N(β0 + β1·Z + β2·A + β3·U + β4·L, σ_y²)
//! ```
//!
//! The zero-engagement effect is β1 (the effect among never-engagers) and the
//! full-engagement effect is β1 + β2, so the true sensitivity value is
//! γ₀ = β1/(β1 + β2). Instrument strength μ_A = E[A^{z=1}] follows from the
//! mixture by quadrature.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{bootstrap, fit_core, point_quantities, se_lst, ReportPlan};
use crate::model::{
    validate_dataset, Adjustment, AnalysisConfig, GammaValue, IttMethod, ModelError, RawRow,
    TrialDataset,
};
use crate::rng::{derive_seed, substream, TAG_BOOTSTRAP, TAG_DATASET};
use crate::transform::TransformSpec;
use crate::util::{adaptive_simpson, expit, mean, sample_variance};

/// Errors raised by the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// A scenario file could not be parsed.
    #[error("scenario parse error{}: {message}", match line { Some(l) => format!(" (line {l})"), None => String::new() })]
    ScenarioParse { line: Option<usize>, message: String },
    /// β1 + β2 = 0 with β1 ≠ 0: the full-engagement effect is zero, so the
    /// effect ratio is undefined.
    #[error("beta1 + beta2 = 0 with beta1 != 0; the effect ratio is undefined")]
    NullEcce,
    /// A scenario violates its invariants.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    /// A harness argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// One Monte Carlo iteration failed.
    #[error("iteration {index} failed: {message}")]
    Iteration { index: usize, message: String },
    /// A generated dataset failed validation.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// All parameters of the data-generating mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Sample size per generated trial.
    pub n: usize,
    /// Intercept of the mass-at-one logit.
    pub alpha01: f64,
    /// Confounder slope of the mass-at-one logit.
    pub alpha11: f64,
    /// Intercept of the mass-at-zero logit.
    pub alpha00: f64,
    /// Confounder slope of the mass-at-zero logit.
    pub alpha10: f64,
    /// Location intercept of the continuous logit-engagement part.
    pub alpha0: f64,
    /// Confounder slope of the continuous part's location.
    pub alpha1: f64,
    /// SD of logit-engagement in the continuous part (≥ 0).
    pub sigma_a: f64,
    /// Outcome intercept.
    pub beta0: f64,
    /// Arm main effect: the zero-engagement effect.
    pub beta1: f64,
    /// Engagement slope; β1 + β2 is the full-engagement effect.
    pub beta2: f64,
    /// Confounder slope in the outcome.
    pub beta3: f64,
    /// Observed-covariate slope in the outcome.
    pub beta4: f64,
    /// Outcome noise SD (≥ 0).
    pub sigma_y: f64,
    /// Randomization probability P(Z = 1).
    pub p_z: f64,
}

impl Default for ScenarioSpec {
    /// The reference simulation design: moderate instrument strength
    /// (μ_A ≈ 0.50 via α0 = −0.05), γ₀ = 0.5 with a zero-engagement effect
    /// of −0.4 and a full-engagement effect of −0.8, N = 250.
    fn default() -> Self {
        ScenarioSpec {
            n: 250,
            alpha01: -2.0,
            alpha11: 1.0,
            alpha00: -2.0,
            alpha10: -1.0,
            alpha0: -0.05,
            alpha1: 0.8,
            sigma_a: 0.2,
            beta0: 9.0,
            beta1: -0.4,
            beta2: -0.4,
            beta3: 0.2,
            beta4: 0.3,
            sigma_y: 0.8,
            p_z: 0.5,
        }
    }
}

impl ScenarioSpec {
    /// Check scenario invariants: n ≥ 2, finite coefficients, σ_a ≥ 0,
    /// σ_y ≥ 0 (zero allowed for degenerate-noise checks), 0 < p_z < 1.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::InvalidScenario(format!("n = {} is below 2", self.n)));
        }
        let coeffs = [
            ("alpha01", self.alpha01),
            ("alpha11", self.alpha11),
            ("alpha00", self.alpha00),
            ("alpha10", self.alpha10),
            ("alpha0", self.alpha0),
            ("alpha1", self.alpha1),
            ("sigma_a", self.sigma_a),
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("beta4", self.beta4),
            ("sigma_y", self.sigma_y),
            ("p_z", self.p_z),
        ];
        for (name, v) in coeffs {
            if !v.is_finite() {
                return Err(SimError::InvalidScenario(format!("{name} is not finite")));
            }
        }
        if self.sigma_a < 0.0 {
            return Err(SimError::InvalidScenario("sigma_a must be >= 0".into()));
        }
        if self.sigma_y < 0.0 {
            return Err(SimError::InvalidScenario("sigma_y must be >= 0".into()));
        }
        if self.p_z <= 0.0 || self.p_z >= 1.0 {
            return Err(SimError::InvalidScenario(format!(
                "p_z = {} must lie strictly inside (0, 1)",
                self.p_z
            )));
        }
        Ok(())
    }
}

/// One generated subject with its latent side-channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    /// Unmeasured confounder.
    pub u: f64,
    /// Observed outcome covariate.
    pub l: f64,
    /// Potential engagement under assignment to intervention.
    pub a_pot: f64,
    /// Randomized arm.
    pub z: bool,
    /// Observed engagement: a_pot if z, else 0.
    pub a: f64,
    /// Observed outcome.
    pub y: f64,
}

/// A generated trial: the estimator-facing dataset plus the latent rows.
///
/// Latent fields live outside [`TrialDataset`] so estimators cannot
/// accidentally consume oracle-only information; the dataset's lone
/// covariate column is `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrial {
    /// Observable data: z, a, y, and the covariate column `l`.
    pub data: TrialDataset,
    /// The latent side-channel, row-aligned with `data`.
    pub latent: Vec<LatentRow>,
}

/// Generate one trial of `spec.n` subjects.
///
/// Per row the draws are, in fixed order: U, L, the arm indicator, the
/// mass-at-one and mass-at-zero uniforms, the logit-engagement normal, and
/// the outcome normal — every draw taken unconditionally so the stream
/// layout never depends on branch outcomes.
pub fn gen_dataset(spec: &ScenarioSpec, seed: u64) -> Result<GeneratedTrial, SimError> {
    spec.validate()?;
    let mut rng = substream(seed, 0);
    let mut latent = Vec::with_capacity(spec.n);
    let mut raw = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let u: f64 = rng.sample(StandardNormal);
        let l: f64 = rng.sample(StandardNormal);
        let z = rng.random::<f64>() < spec.p_z;
        let d_one = rng.random::<f64>();
        let d_zero = rng.random::<f64>();
        let eps_a: f64 = rng.sample(StandardNormal);
        let eps_y: f64 = rng.sample(StandardNormal);

        let a_pot = if d_one < expit(spec.alpha01 + spec.alpha11 * u) {
            1.0
        } else if d_zero < expit(spec.alpha00 + spec.alpha10 * u) {
            0.0
        } else {
            expit(spec.alpha0 + spec.alpha1 * u + spec.sigma_a * eps_a)
        };
        let a = if z { a_pot } else { 0.0 };
        let y = spec.beta0
            + spec.beta1 * f64::from(u8::from(z))
            + spec.beta2 * a
            + spec.beta3 * u
            + spec.beta4 * l
            + spec.sigma_y * eps_y;

        latent.push(LatentRow { u, l, a_pot, z, a, y });
        raw.push(RawRow { z, a: Some(a), y, covariates: vec![l] });
    }
    let data = validate_dataset(raw, vec!["l".to_string()])?;
    Ok(GeneratedTrial { data, latent })
}

/// The true sensitivity value γ₀ = β1/(β1 + β2): the ratio of the
/// zero-engagement effect to the full-engagement effect.
///
/// Returns 0 by convention when both effects are zero; errs when the
/// full-engagement effect alone vanishes.
pub fn true_gamma(beta1: f64, beta2: f64) -> Result<f64, SimError> {
    let ecce = beta1 + beta2;
    if ecce == 0.0 {
        return if beta1 == 0.0 { Ok(0.0) } else { Err(SimError::NullEcce) };
    }
    Ok(beta1 / ecce)
}

/// True instrument strength μ_A = E[A^{z=1}], by nested adaptive quadrature
/// over the confounder and the logit-normal noise (absolute tolerance well
/// inside 1e−6).
pub fn true_mu_a(spec: &ScenarioSpec) -> Result<f64, SimError> {
    spec.validate()?;
    let inner_mean = |u: f64| -> f64 {
        let location = spec.alpha0 + spec.alpha1 * u;
        if spec.sigma_a == 0.0 {
            expit(location)
        } else {
            adaptive_simpson(
                &|e| crate::util::normal_pdf(e) * expit(location + spec.sigma_a * e),
                -12.0,
                12.0,
                1e-8,
            )
        }
    };
    let integrand = |u: f64| -> f64 {
        let p_one = expit(spec.alpha01 + spec.alpha11 * u);
        let p_zero = expit(spec.alpha00 + spec.alpha10 * u);
        let conditional = p_one + (1.0 - p_one) * (1.0 - p_zero) * inner_mean(u);
        crate::util::normal_pdf(u) * conditional
    };
    Ok(adaptive_simpson(&integrand, -12.0, 12.0, 1e-7))
}

/// One row of a Monte Carlo summary: a tracked quantity's mean estimate,
/// empirical SD across iterations, and mean standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    /// Quantity label (shared with [`ReportPlan::labels`]).
    pub label: String,
    /// γ for Δ and ξ rows; absent for `itt` / `mu_h`.
    pub gamma: Option<f64>,
    /// Engagement level for Δ rows; absent otherwise.
    pub a: Option<f64>,
    /// Mean point estimate across iterations.
    pub mean_est: f64,
    /// Empirical SD of the point estimates (the Monte Carlo ESE).
    pub ese: f64,
    /// Mean large-sample (delta-method) SE across iterations.
    pub mean_se_lst: Option<f64>,
    /// Mean bootstrap SE across iterations; absent when B = 0.
    pub mean_se_boot: Option<f64>,
}

/// A complete Monte Carlo study summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    /// One row per tracked quantity, in plan order.
    pub rows: Vec<McRow>,
    /// Iteration count K.
    pub k: usize,
    /// Bootstrap replicates per iteration (0 = bootstrap skipped).
    pub b: usize,
    /// Per-trial sample size.
    pub n: usize,
    /// Master seed.
    pub seed: u64,
}

impl McSummary {
    /// Find a row by label.
    pub fn row(&self, label: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Run a Monte Carlo study: K generated trials, each analyzed with least
/// squares adjusting linearly for `l`, the identity transform, and the given
/// (γ, a) grids; with `b ≥ 2`, each iteration also runs a B-replicate
/// bootstrap so bootstrap SEs can be compared against the delta-method SEs.
///
/// Iteration i depends only on (seed, i), so summaries are bit-identical
/// across worker counts; iterations run in parallel.
pub fn monte_carlo(
    spec: &ScenarioSpec,
    gammas: &[GammaValue],
    a_grid: &[f64],
    k: usize,
    b: usize,
    seed: u64,
) -> Result<McSummary, SimError> {
    spec.validate()?;
    if k < 2 {
        return Err(SimError::InvalidArgument(format!("k = {k} is below 2")));
    }
    if b == 1 {
        return Err(SimError::InvalidArgument(
            "b = 1 cannot produce a bootstrap SD; use b = 0 to skip the bootstrap".into(),
        ));
    }
    if gammas.is_empty() || a_grid.is_empty() {
        return Err(SimError::InvalidArgument("gamma and a grids must be non-empty".into()));
    }

    let plan = ReportPlan {
        include_itt: true,
        include_mu_h: true,
        gammas: gammas.to_vec(),
        a_grid: a_grid.to_vec(),
        xi_gammas: gammas.to_vec(),
    };
    let config = AnalysisConfig {
        gamma_grid: gammas.to_vec(),
        a_grid: a_grid.to_vec(),
        transform: TransformSpec::Identity,
        itt_method: IttMethod::OlsAdjusted,
        adjustment: Adjustment::linear("l"),
        bootstrap_reps: b.max(2),
        ci_level: 0.95,
        seed: 0,
    };
    let gen_root = derive_seed(seed, TAG_DATASET);
    let boot_root = derive_seed(seed, TAG_BOOTSTRAP);

    type IterationOut = (Vec<f64>, Vec<f64>, Option<Vec<f64>>);
    let per_iteration: Result<Vec<IterationOut>, SimError> = (0..k)
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<IterationOut, String> {
                let trial =
                    gen_dataset(spec, derive_seed(gen_root, i as u64)).map_err(|e| e.to_string())?;
                let (itt, mu) = fit_core(&trial.data, &config).map_err(|e| e.to_string())?;
                let estimates = point_quantities(&itt, &mu, &plan, &config.transform)
                    .map_err(|e| e.to_string())?;
                let lst = se_lst(&itt, &mu, &plan, &config.transform).map_err(|e| e.to_string())?;
                let boot_se = if b >= 2 {
                    let mut iter_config = config.clone();
                    iter_config.seed = derive_seed(boot_root, i as u64);
                    let result =
                        bootstrap(&trial.data, &iter_config, &plan).map_err(|e| e.to_string())?;
                    Some(result.se_boot)
                } else {
                    None
                };
                Ok((estimates, lst, boot_se))
            };
            run().map_err(|message| SimError::Iteration { index: i, message })
        })
        .collect();
    let per_iteration = per_iteration?;

    let q = plan.len();
    let labels = plan.labels();
    let mut rows = Vec::with_capacity(q);
    for (j, label) in labels.into_iter().enumerate() {
        let estimates: Vec<f64> = per_iteration.iter().map(|(e, _, _)| e[j]).collect();
        let lst: Vec<f64> = per_iteration.iter().map(|(_, l, _)| l[j]).collect();
        let boot: Option<Vec<f64>> = per_iteration
            .iter()
            .map(|(_, _, bse)| bse.as_ref().map(|v| v[j]))
            .collect();
        let (gamma, a) = plan_coordinates(&plan, j);
        rows.push(McRow {
            label,
            gamma,
            a,
            mean_est: mean(&estimates),
            ese: sample_variance(&estimates).sqrt(),
            mean_se_lst: Some(mean(&lst)),
            mean_se_boot: boot.map(|v| mean(&v)),
        });
    }

    Ok(McSummary { rows, k, b, n: spec.n, seed })
}

/// The (γ, a) coordinates of the j-th tracked quantity in a plan.
fn plan_coordinates(plan: &ReportPlan, j: usize) -> (Option<f64>, Option<f64>) {
    let mut idx = j;
    if plan.include_itt {
        if idx == 0 {
            return (None, None);
        }
        idx -= 1;
    }
    if plan.include_mu_h {
        if idx == 0 {
            return (None, None);
        }
        idx -= 1;
    }
    let grid = plan.gammas.len() * plan.a_grid.len();
    if idx < grid {
        let g = plan.gammas[idx / plan.a_grid.len()].value();
        let a = plan.a_grid[idx % plan.a_grid.len()];
        return (Some(g), Some(a));
    }
    idx -= grid;
    (Some(plan.xi_gammas[idx].value()), None)
}

/// Bias study under (possibly wrong) specified γ values: Monte Carlo mean
/// point estimates across the (γ, a) grid, bootstrap skipped. The specified
/// γ grid need not contain the scenario's true γ₀ — comparing the two is
/// the point.
pub fn misspecification_sweep(
    spec: &ScenarioSpec,
    gammas: &[GammaValue],
    a_grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<McSummary, SimError> {
    monte_carlo(spec, gammas, a_grid, k, 0, seed)
}

/// Parse a flat `name = value` scenario file (`#` starts a comment).
///
/// Every parameter key must be present except `p_z`, which defaults to 0.5;
/// unknown and duplicate keys are line-numbered errors, as are malformed
/// values.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioSpec, SimError> {
    const KEYS: [&str; 15] = [
        "n", "alpha01", "alpha11", "alpha00", "alpha10", "alpha0", "alpha1", "sigma_a", "beta0",
        "beta1", "beta2", "beta3", "beta4", "sigma_y", "p_z",
    ];
    let mut seen: Vec<(&str, f64)> = Vec::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(SimError::ScenarioParse {
                line: Some(lineno),
                message: format!("expected `name = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let Some(&canonical) = KEYS.iter().find(|&&k| k == key) else {
            return Err(SimError::ScenarioParse {
                line: Some(lineno),
                message: format!("unknown key `{key}`"),
            });
        };
        if seen.iter().any(|(k, _)| *k == canonical) {
            return Err(SimError::ScenarioParse {
                line: Some(lineno),
                message: format!("duplicate key `{key}`"),
            });
        }
        let parsed: f64 = value.parse().map_err(|_| SimError::ScenarioParse {
            line: Some(lineno),
            message: format!("could not parse value `{value}` for key `{key}` as a number"),
        })?;
        if canonical == "n" && (parsed.fract() != 0.0 || parsed < 0.0) {
            return Err(SimError::ScenarioParse {
                line: Some(lineno),
                message: format!("n must be a non-negative integer, got `{value}`"),
            });
        }
        seen.push((canonical, parsed));
    }

    let get = |key: &str| seen.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
    let require = |key: &str| {
        get(key).ok_or_else(|| SimError::ScenarioParse {
            line: None,
            message: format!("missing required key `{key}`"),
        })
    };
    let spec = ScenarioSpec {
        n: require("n")? as usize,
        alpha01: require("alpha01")?,
        alpha11: require("alpha11")?,
        alpha00: require("alpha00")?,
        alpha10: require("alpha10")?,
        alpha0: require("alpha0")?,
        alpha1: require("alpha1")?,
        sigma_a: require("sigma_a")?,
        beta0: require("beta0")?,
        beta1: require("beta1")?,
        beta2: require("beta2")?,
        beta3: require("beta3")?,
        beta4: require("beta4")?,
        sigma_y: require("sigma_y")?,
        p_z: get("p_z").unwrap_or(0.5),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gv(g: f64) -> GammaValue {
        GammaValue::new(g).unwrap()
    }

    #[test]
    fn true_gamma_reference_cases() {
        assert_abs_diff_eq!(true_gamma(0.0, -0.8).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(true_gamma(-0.4, -0.4).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(true_gamma(-0.8, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(true_gamma(0.0, 0.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(true_gamma(0.4, -0.4), Err(SimError::NullEcce)));
    }

    #[test]
    fn true_mu_a_quadrature_oracles() {
        // Frozen against an independent double-quadrature implementation
        // (cross-checked by 2×10⁷-draw Monte Carlo).
        let mut spec = ScenarioSpec::default();
        spec.alpha0 = -1.05;
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.35286260, epsilon = 1e-5);
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.35, epsilon = 0.01);
        spec.alpha0 = -0.05;
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.49863359, epsilon = 1e-5);
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.50, epsilon = 0.01);
        spec.alpha0 = 1.9;
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.75057250, epsilon = 1e-5);
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 0.75, epsilon = 0.01);
        // All engagement mass at one.
        spec.alpha01 = 30.0;
        assert_abs_diff_eq!(true_mu_a(&spec).unwrap(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn generated_rows_are_latently_consistent() {
        let spec = ScenarioSpec::default();
        let trial = gen_dataset(&spec, 99).unwrap();
        assert_eq!(trial.latent.len(), spec.n);
        assert_eq!(trial.data.n(), spec.n);
        for (row, latent) in trial.data.rows().iter().zip(&trial.latent) {
            assert!((0.0..=1.0).contains(&latent.a_pot));
            if latent.z {
                assert_eq!(latent.a, latent.a_pot);
            } else {
                assert_eq!(latent.a, 0.0);
            }
            assert_eq!(row.z, latent.z);
            assert_eq!(row.a, latent.a);
            assert_eq!(row.y, latent.y);
            assert_eq!(row.covariates, vec![latent.l]);
        }
    }

    #[test]
    fn degenerate_noise_pins_the_outcome_at_its_intercept() {
        let spec = ScenarioSpec {
            sigma_y: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            beta4: 0.0,
            ..ScenarioSpec::default()
        };
        let trial = gen_dataset(&spec, 7).unwrap();
        for row in trial.data.rows() {
            assert_eq!(row.y, spec.beta0);
        }
    }

    #[test]
    fn empirical_engagement_mean_matches_quadrature() {
        // Oracle coherence: the empirical mean of A^{z=1} over many draws
        // must match the quadrature value within 3 standard errors.
        let spec = ScenarioSpec { n: 200_000, ..ScenarioSpec::default() };
        let trial = gen_dataset(&spec, 2024).unwrap();
        let a_pot: Vec<f64> = trial.latent.iter().map(|r| r.a_pot).collect();
        let empirical = mean(&a_pot);
        let se = (sample_variance(&a_pot) / a_pot.len() as f64).sqrt();
        let oracle = true_mu_a(&spec).unwrap();
        assert!(
            (empirical - oracle).abs() < 3.0 * se,
            "empirical {empirical} vs quadrature {oracle} (3se = {})",
            3.0 * se
        );
        // And the advertised moderate-strength value.
        assert_abs_diff_eq!(empirical, 0.50, epsilon = 0.01);
    }

    #[test]
    fn generation_is_reproducible_and_seed_sensitive() {
        let spec = ScenarioSpec::default();
        let t1 = gen_dataset(&spec, 5).unwrap();
        let t2 = gen_dataset(&spec, 5).unwrap();
        assert_eq!(t1, t2);
        let t3 = gen_dataset(&spec, 6).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn monte_carlo_centers_on_the_closed_form_itt() {
        // Δ_ITT = Δ(1)·(γ₀ + (1−γ₀)·μ_A), with Δ(1) = β1 + β2.
        let spec = ScenarioSpec::default();
        let gamma0 = true_gamma(spec.beta1, spec.beta2).unwrap();
        let mu_a = true_mu_a(&spec).unwrap();
        let truth = (spec.beta1 + spec.beta2) * (gamma0 + (1.0 - gamma0) * mu_a);
        let k = 80;
        let summary =
            monte_carlo(&spec, &[gv(gamma0)], &[0.0, 1.0], k, 0, 314159).unwrap();
        let itt_row = summary.row("itt").unwrap();
        let tol = 3.0 * itt_row.ese / (k as f64).sqrt();
        assert!(
            (itt_row.mean_est - truth).abs() < tol,
            "mean ITT {} vs oracle {truth} (tol {tol})",
            itt_row.mean_est
        );
        assert!(itt_row.mean_se_lst.is_some());
        assert!(itt_row.mean_se_boot.is_none());
    }

    #[test]
    fn monte_carlo_is_reproducible_across_worker_counts() {
        let spec = ScenarioSpec { n: 80, ..ScenarioSpec::default() };
        let gammas = [gv(0.5)];
        let serial = crate::with_thread_limit(Some(1), || {
            monte_carlo(&spec, &gammas, &[0.0, 1.0], 6, 8, 2718).unwrap()
        });
        let parallel = crate::with_thread_limit(Some(4), || {
            monte_carlo(&spec, &gammas, &[0.0, 1.0], 6, 8, 2718).unwrap()
        });
        assert_eq!(serial, parallel);
        let again = monte_carlo(&spec, &gammas, &[0.0, 1.0], 6, 8, 2718).unwrap();
        assert_eq!(serial, again);
        // Bootstrap SEs were requested and recorded.
        assert!(serial.row("itt").unwrap().mean_se_boot.is_some());
    }

    #[test]
    fn monte_carlo_validates_arguments() {
        let spec = ScenarioSpec::default();
        assert!(matches!(
            monte_carlo(&spec, &[gv(0.5)], &[0.0], 1, 0, 1),
            Err(SimError::InvalidArgument(_))
        ));
        assert!(matches!(
            monte_carlo(&spec, &[gv(0.5)], &[0.0], 10, 1, 1),
            Err(SimError::InvalidArgument(_))
        ));
        assert!(matches!(
            monte_carlo(&spec, &[], &[0.0], 10, 0, 1),
            Err(SimError::InvalidArgument(_))
        ));
    }

    #[test]
    fn gamma_one_makes_every_engagement_column_identical() {
        let spec = ScenarioSpec { beta1: -0.8, beta2: 0.0, ..ScenarioSpec::default() };
        assert_abs_diff_eq!(true_gamma(spec.beta1, spec.beta2).unwrap(), 1.0, epsilon = 1e-15);
        let summary = monte_carlo(&spec, &[gv(1.0)], &[0.0, 0.5, 1.0], 10, 0, 11).unwrap();
        let d0 = summary.row("delta[gamma=1,a=0]").unwrap().mean_est;
        let dh = summary.row("delta[gamma=1,a=0.5]").unwrap().mean_est;
        let d1 = summary.row("delta[gamma=1,a=1]").unwrap().mean_est;
        let itt = summary.row("itt").unwrap().mean_est;
        assert_abs_diff_eq!(d0, itt, epsilon = 1e-12);
        assert_abs_diff_eq!(dh, itt, epsilon = 1e-12);
        assert_abs_diff_eq!(d1, itt, epsilon = 1e-12);
    }

    #[test]
    fn misspecification_sweep_crosses_at_the_instrument_strength() {
        // At a = μ_A the mean estimate matches the ITT whatever γ was
        // specified (the stationary crossing).
        let spec = ScenarioSpec { n: 400, ..ScenarioSpec::default() };
        let mu_a = true_mu_a(&spec).unwrap();
        let summary = misspecification_sweep(
            &spec,
            &[gv(0.0), gv(0.5), gv(1.0)],
            &[mu_a],
            40,
            271828,
        )
        .unwrap();
        let itt = summary.row("itt").unwrap();
        for gamma_label in ["0", "0.5", "1"] {
            let row = summary.row(&format!("delta[gamma={gamma_label},a={mu_a}]")).unwrap();
            // μ̂_h ≠ μ_A per iteration, so allow a few MC standard errors.
            assert_abs_diff_eq!(row.mean_est, itt.mean_est, epsilon = 0.02);
        }
    }

    #[test]
    fn scenario_files_round_trip_and_fail_loudly() {
        let text = "\
# reference design
n = 250
alpha01 = -2.0
alpha11 = 1.0
alpha00 = -2.0
alpha10 = -1.0
alpha0 = -0.05
alpha1 = 0.8
sigma_a = 0.2
beta0 = 9.0   # outcome intercept
beta1 = -0.4
beta2 = -0.4
beta3 = 0.2
beta4 = 0.3
sigma_y = 0.8
";
        let spec = parse_scenario_file(text).unwrap();
        assert_eq!(spec, ScenarioSpec::default());
        assert_eq!(spec.p_z, 0.5); // default applied

        // Missing key is named.
        let missing = text.replace("sigma_y = 0.8\n", "");
        let err = parse_scenario_file(&missing).unwrap_err();
        assert!(err.to_string().contains("sigma_y"), "{err}");

        // Malformed value carries its line number.
        let bad = text.replace("beta2 = -0.4", "beta2 = oops");
        let err = parse_scenario_file(&bad).unwrap_err();
        assert!(matches!(err, SimError::ScenarioParse { line: Some(12), .. }), "{err}");

        // Unknown and duplicate keys rejected.
        let unknown = format!("{text}gamma = 0.5\n");
        assert!(parse_scenario_file(&unknown).is_err());
        let duplicate = format!("{text}beta1 = -0.4\n");
        assert!(parse_scenario_file(&duplicate).is_err());
    }

    #[test]
    fn scenario_validation_rejects_bad_parameters() {
        let mut spec = ScenarioSpec { p_z: 1.0, ..ScenarioSpec::default() };
        assert!(spec.validate().is_err());
        spec.p_z = 0.5;
        spec.sigma_a = -0.1;
        assert!(spec.validate().is_err());
        spec.sigma_a = 0.2;
        spec.n = 1;
        assert!(spec.validate().is_err());
    }
}
