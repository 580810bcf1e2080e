//! Generative property checks plus the heavier deterministic invariants:
//! random transforms stay monotone, random valid datasets never trip the
//! estimators, the effect grid keeps its structure for arbitrary moments,
//! bootstrap and delta-method uncertainty agree at moderate sample sizes,
//! and the simulation engine is bit-reproducible and latent-consistent.

use proptest::prelude::*;

use late_bounds::estimators::{itt_diff_means, itt_ols, mu_h_estimate, IttEstimate, MuHEstimate};
use late_bounds::inference::{bootstrap, se_lst, var_c, var_late, ReportPlan};
use late_bounds::late::{
    engagement_for_effect_threshold, gamma_for_xi_threshold, grid, late_estimate, xi,
    EngagementSolution,
};
use late_bounds::model::{
    validate_dataset, Adjustment, AnalysisConfig, GammaValue, IttMethod, RawRow, TrialDataset,
};
use late_bounds::simulate::{gen_dataset, monte_carlo, true_mu_a, ScenarioSpec};
use late_bounds::transform::TransformSpec;
use late_bounds::{c_factor, with_thread_limit};

fn g(value: f64) -> GammaValue {
    GammaValue::new(value).expect("gamma in [0, 1]")
}

/// Nonzero ITT moments over a wide but well-conditioned range.
fn arb_itt() -> impl Strategy<Value = IttEstimate> {
    (
        prop_oneof![-4.0..=-0.05f64, 0.05..=4.0f64],
        0.05..=4.0f64,
        50usize..2000,
    )
        .prop_map(|(delta_itt, sigma2_itt, n_total)| IttEstimate {
            delta_itt,
            sigma2_itt,
            method: IttMethod::DiffMeans,
            n_total,
        })
}

/// Instrument-strength moments bounded away from the degenerate zero.
fn arb_mu() -> impl Strategy<Value = MuHEstimate> {
    (0.05..=1.0f64, 0.0005..=0.25f64, 10usize..1000)
        .prop_map(|(mu_h, sigma2_h, n1)| MuHEstimate { mu_h, sigma2_h, n1 })
}

/// Random piecewise-linear transforms, monotone by construction: interior
/// abscissae and ordinates are drawn independently and sorted, then wrapped
/// in the mandatory (0, 0) and (1, 1) endpoints.
fn arb_table_transform() -> impl Strategy<Value = TransformSpec> {
    (
        prop::collection::vec(0.001..0.999f64, 0..6),
        prop::collection::vec(0.0..=1.0f64, 0..6),
    )
        .prop_map(|(mut abscissae, mut ordinates)| {
            let k = abscissae.len().min(ordinates.len());
            abscissae.truncate(k);
            ordinates.truncate(k);
            abscissae.sort_by(f64::total_cmp);
            ordinates.sort_by(f64::total_cmp);
            let mut points = vec![(0.0, 0.0)];
            points.extend(abscissae.into_iter().zip(ordinates));
            points.push((1.0, 1.0));
            TransformSpec::table(points).expect("monotone by construction")
        })
}

/// Random datasets that satisfy every structural precondition: both arms
/// populated, engagement in [0, 1] with at least one engaged treated row,
/// and a covariate that varies within the treated arm (so a linear
/// adjustment stays full-rank).
fn arb_dataset() -> impl Strategy<Value = TrialDataset> {
    (
        prop::collection::vec((0.0..=1.0f64, -2.0..2.0f64, -1.5..1.5f64), 2..25),
        prop::collection::vec((-2.0..2.0f64, -1.5..1.5f64), 2..25),
    )
        .prop_map(|(treated, control)| {
            let mut rows = Vec::with_capacity(treated.len() + control.len());
            for (i, &(a, noise, x)) in treated.iter().enumerate() {
                let a = if i == 0 { 0.5 + a / 2.0 } else { a };
                let x = match i {
                    0 => 1.0,
                    1 => -1.0,
                    _ => x,
                };
                rows.push(RawRow {
                    z: true,
                    a: Some(a),
                    y: 9.0 - 0.5 * a + noise,
                    covariates: vec![x],
                });
            }
            for &(noise, x) in &control {
                rows.push(RawRow { z: false, a: None, y: 9.0 + noise, covariates: vec![x] });
            }
            validate_dataset(rows, vec!["x".to_string()]).expect("constructed valid")
        })
}

proptest! {
    /// Every generated table transform hits its endpoints exactly and is
    /// nondecreasing along any ordered probe sequence.
    #[test]
    fn table_transforms_are_monotone_with_exact_endpoints(
        spec in arb_table_transform(),
        mut probes in prop::collection::vec(0.0..=1.0f64, 1..40),
    ) {
        prop_assert_eq!(spec.apply(0.0).unwrap(), 0.0);
        prop_assert_eq!(spec.apply(1.0).unwrap(), 1.0);
        probes.sort_by(f64::total_cmp);
        let mut prev = -f64::INFINITY;
        for a in probes {
            let h = spec.apply(a).unwrap();
            prop_assert!((0.0..=1.0).contains(&h), "h({a}) = {h} escaped [0, 1]");
            prop_assert!(h >= prev, "h({a}) = {h} dipped below {prev}");
            prev = h;
        }
    }

    /// Structurally valid datasets are fully analyzable: both ITT paths, the
    /// instrument strength, the whole effect grid, and every variance bundle
    /// come back finite without errors.
    #[test]
    fn random_valid_datasets_never_trip_the_estimators(data in arb_dataset()) {
        let id = TransformSpec::identity();

        let by_diff = itt_diff_means(&data).unwrap();
        prop_assert!(by_diff.delta_itt.is_finite() && by_diff.sigma2_itt.is_finite());

        let by_ols = itt_ols(&data, &Adjustment::linear("x")).unwrap();
        prop_assert!(by_ols.delta_itt.is_finite() && by_ols.sigma2_itt >= 0.0);

        let mu = mu_h_estimate(&data, &id).unwrap();
        let treated = data.treated_engagement();
        let lo = treated.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = treated.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(mu.mu_h > 0.0 && mu.mu_h <= 1.0);
        prop_assert!(
            lo - 1e-12 <= mu.mu_h && mu.mu_h <= hi + 1e-12,
            "mean engagement {} outside observed range [{lo}, {hi}]", mu.mu_h
        );

        let gammas = [g(0.0), g(0.37), g(1.0)];
        let cells = grid(&by_diff, &mu, &gammas, &id, &[0.0, 0.5, 1.0]).unwrap();
        for cell in cells {
            prop_assert!(cell.delta.is_finite());
            prop_assert!(
                cell.lower_bound - 1e-12 <= cell.delta && cell.delta <= cell.upper_bound + 1e-12
            );
            let bundle = var_late(&by_diff, &mu, cell.gamma, cell.h_a).unwrap();
            prop_assert!(bundle.tau2.is_finite() && bundle.tau2 >= 0.0);
            prop_assert!(bundle.se_late.is_finite() && bundle.se_late >= 0.0);
        }
    }

    /// Re-validating a validated dataset reproduces it exactly.
    #[test]
    fn validation_is_idempotent(data in arb_dataset()) {
        let raw: Vec<RawRow> = data
            .rows()
            .iter()
            .map(|r| RawRow {
                z: r.z,
                a: Some(r.a),
                y: r.y,
                covariates: r.covariates.clone(),
            })
            .collect();
        let revalidated = validate_dataset(raw, vec!["x".to_string()]).unwrap();
        prop_assert_eq!(&revalidated, &data);
    }

    /// For arbitrary moments the effect surface keeps its structure:
    /// stationary at h⁻¹(μ̂_h), sign-preserving, monotone in engagement,
    /// inside its bounds, consistent between the two ξ forms, and with a
    /// variance that recomposes from its published pieces.
    #[test]
    fn effect_grid_structure_holds_for_random_moments(
        itt in arb_itt(),
        mu in arb_mu(),
        gamma_raw in 0.0..=1.0f64,
        a_pair in (0.0..=1.0f64, 0.0..=1.0f64),
    ) {
        let id = TransformSpec::identity();
        let gamma = g(gamma_raw);
        let sign = itt.delta_itt.signum();

        // Stationarity at the instrument strength itself.
        let stationary = late_estimate(&itt, &mu, gamma, &id, mu.mu_h).unwrap();
        prop_assert!((stationary.delta - itt.delta_itt).abs() <= 1e-10);

        // Ordered engagement pair: sign preserved, magnitude monotone,
        // envelope respected.
        let (a_lo, a_hi) = if a_pair.0 <= a_pair.1 { a_pair } else { (a_pair.1, a_pair.0) };
        let lo = late_estimate(&itt, &mu, gamma, &id, a_lo).unwrap();
        let hi = late_estimate(&itt, &mu, gamma, &id, a_hi).unwrap();
        if gamma.value() > 0.0 || a_lo > 0.0 {
            prop_assert!(lo.delta * sign > 0.0, "sign flipped at a = {a_lo}");
        }
        prop_assert!(lo.delta.abs() <= hi.delta.abs() + 1e-12);
        for cell in [&lo, &hi] {
            prop_assert!(
                cell.lower_bound - 1e-12 <= cell.delta && cell.delta <= cell.upper_bound + 1e-12
            );
        }

        // Endpoint ordering: |Δ(1)| ≥ |Δ_ITT| ≥ |Δ(0)|, all on the ITT's side
        // of zero.
        let d0 = late_estimate(&itt, &mu, gamma, &id, 0.0).unwrap().delta;
        let d1 = late_estimate(&itt, &mu, gamma, &id, 1.0).unwrap().delta;
        prop_assert!(sign * d1 >= sign * itt.delta_itt - 1e-12);
        prop_assert!(sign * itt.delta_itt >= sign * d0 - 1e-12);
        prop_assert!(sign * d0 >= -1e-12);

        // ξ: product form equals difference form.
        let spread = xi(&itt, &mu, gamma).unwrap().xi;
        prop_assert!((spread - (d1 - d0)).abs() <= 1e-10);

        // Variance recomposition from the published pieces.
        let h_a = a_hi;
        let bundle = var_late(&itt, &mu, gamma, h_a).unwrap();
        let c = c_factor(gamma, h_a, mu.mu_h).unwrap();
        let sigma2_c = var_c(gamma, h_a, &mu).unwrap();
        let recomposed = c * c * itt.sigma2_itt + itt.delta_itt * itt.delta_itt * sigma2_c;
        prop_assert!(
            (bundle.tau2 - recomposed).abs() <= 1e-12 * recomposed.max(1.0),
            "tau2 = {} vs recomposed {recomposed}", bundle.tau2
        );
        prop_assert!(
            (bundle.se_late - (bundle.tau2 / itt.n_total as f64).sqrt()).abs() <= 1e-15
        );
    }

    /// At γ = 1 the scaling factor is exactly one with zero variance, so the
    /// standard error collapses to the ITT standard error at every a.
    #[test]
    fn gamma_one_standard_errors_collapse_to_the_itt(
        itt in arb_itt(),
        mu in arb_mu(),
        a in 0.0..=1.0f64,
    ) {
        let bundle = var_late(&itt, &mu, g(1.0), a).unwrap();
        prop_assert_eq!(bundle.tau2, itt.sigma2_itt);
        prop_assert_eq!(bundle.se_late, (itt.sigma2_itt / itt.n_total as f64).sqrt());
    }

    /// The closed-form threshold solvers invert their defining equations:
    /// a returned γ* satisfies |ξ_{γ*}| = t, a returned a* satisfies
    /// |Δ_γ(a*)| = t, and `None` only comes back when the target is
    /// genuinely out of reach on the relevant side.
    #[test]
    fn threshold_solvers_invert_their_defining_equations(
        itt in arb_itt(),
        mu in arb_mu(),
        gamma_raw in 0.0..=0.95f64,
        t_frac in 0.05..=3.0f64,
    ) {
        let id = TransformSpec::identity();
        let t = t_frac * itt.delta_itt.abs();

        match gamma_for_xi_threshold(&itt, &mu, t).unwrap() {
            Some(gamma_star) => {
                let spread = xi(&itt, &mu, gamma_star).unwrap().xi.abs();
                prop_assert!(
                    (spread - t).abs() <= 1e-8 * t.max(1.0),
                    "|xi(gamma*)| = {spread}, target {t}"
                );
            }
            None => {
                // Even the γ = 0 spread (the maximum) falls short.
                let max_spread = xi(&itt, &mu, g(0.0)).unwrap().xi.abs();
                prop_assert!(max_spread < t);
            }
        }

        let gamma = g(gamma_raw);
        match engagement_for_effect_threshold(&itt, &mu, gamma, &id, t).unwrap() {
            Some(EngagementSolution::Unique { a_star }) => {
                prop_assert!((0.0..=1.0).contains(&a_star));
                let at_star = late_estimate(&itt, &mu, gamma, &id, a_star).unwrap().delta.abs();
                prop_assert!(
                    (at_star - t).abs() <= 1e-8 * t.max(1.0),
                    "|delta(a*)| = {at_star}, target {t}"
                );
            }
            Some(other) => {
                prop_assert!(false, "identity transform returned {other:?}");
            }
            None => {
                let at_zero = late_estimate(&itt, &mu, gamma, &id, 0.0).unwrap().delta.abs();
                let at_one = late_estimate(&itt, &mu, gamma, &id, 1.0).unwrap().delta.abs();
                prop_assert!(
                    at_zero >= t - 1e-12 || at_one <= t + 1e-12,
                    "no solution reported but t = {t} lies inside [{at_zero}, {at_one}]"
                );
            }
        }
    }
}

/// Under the reference data-generating process at N = 1000, bootstrap and
/// delta-method standard errors agree within 15% on every tracked quantity
/// with appreciable spread.
#[test]
fn bootstrap_and_delta_method_standard_errors_agree_at_n_1000() {
    let spec = ScenarioSpec { n: 1000, ..ScenarioSpec::default() };
    let trial = gen_dataset(&spec, 17).expect("generation succeeds");
    let config = AnalysisConfig {
        gamma_grid: vec![g(0.0), g(0.5), g(1.0)],
        a_grid: vec![0.0, 1.0],
        itt_method: IttMethod::OlsAdjusted,
        adjustment: Adjustment::linear("l"),
        bootstrap_reps: 400,
        seed: 17,
        ..AnalysisConfig::default()
    };
    config.validate().expect("config valid");

    let (itt, mu) = late_bounds::fit_core(&trial.data, &config).expect("fit succeeds");
    let plan = ReportPlan::full(&config);
    let asymptotic = se_lst(&itt, &mu, &plan, &config.transform).expect("delta method");
    let boot = bootstrap(&trial.data, &config, &plan).expect("bootstrap runs");

    assert_eq!(boot.labels, plan.labels());
    for (i, label) in boot.labels.iter().enumerate() {
        let se_a = asymptotic[i];
        let se_b = boot.se_boot[i];
        if se_a <= 1e-8 {
            // Structurally zero spread (the γ=0 convention cell, ξ at γ=1):
            // the bootstrap must agree that there is nothing to estimate.
            assert!(se_b <= 1e-8, "{label}: delta-method SE 0 but bootstrap SE {se_b}");
            continue;
        }
        assert!(
            (se_b / se_a - 1.0).abs() <= 0.15,
            "{label}: bootstrap SE {se_b:.5} vs delta-method SE {se_a:.5}"
        );
    }
}

/// Lowering the confidence level can only pull the quantile interval
/// inward: with identical replicates, the 90% interval nests inside the 95%.
#[test]
fn narrower_confidence_levels_give_nested_intervals() {
    let trial = gen_dataset(&ScenarioSpec::default(), 23).expect("generation succeeds");
    let wide = AnalysisConfig {
        gamma_grid: vec![g(0.0), g(0.5), g(1.0)],
        a_grid: vec![0.0, 0.5, 1.0],
        bootstrap_reps: 199,
        ci_level: 0.95,
        seed: 5,
        ..AnalysisConfig::default()
    };
    wide.validate().expect("config valid");
    let narrow = AnalysisConfig { ci_level: 0.90, ..wide.clone() };

    let plan = ReportPlan::full(&wide);
    let at_95 = bootstrap(&trial.data, &wide, &plan).expect("bootstrap runs");
    let at_90 = bootstrap(&trial.data, &narrow, &plan).expect("bootstrap runs");

    for i in 0..at_95.labels.len() {
        assert!(
            at_95.ci_lower[i] <= at_90.ci_lower[i] && at_90.ci_upper[i] <= at_95.ci_upper[i],
            "{}: 90% interval [{}, {}] not inside 95% interval [{}, {}]",
            at_95.labels[i],
            at_90.ci_lower[i],
            at_90.ci_upper[i],
            at_95.ci_lower[i],
            at_95.ci_upper[i]
        );
    }
}

/// The Monte Carlo engine is bit-reproducible: rerunning with the same seed,
/// or under different worker counts, yields identical summaries.
#[test]
fn monte_carlo_summaries_are_bit_identical_across_runs_and_worker_counts() {
    let spec = ScenarioSpec { n: 80, ..ScenarioSpec::default() };
    let run = || monte_carlo(&spec, &[g(0.5)], &[0.0, 1.0], 6, 8, 77);

    let first = run().expect("monte carlo runs");
    let second = run().expect("monte carlo runs");
    assert_eq!(first, second, "rerun with the same seed diverged");

    let single = with_thread_limit(Some(1), run).expect("monte carlo runs");
    let four = with_thread_limit(Some(4), run).expect("monte carlo runs");
    assert_eq!(first, single, "single-worker run diverged");
    assert_eq!(first, four, "four-worker run diverged");
}

/// The latent side-channel stays aligned with the observable rows: arms and
/// outcomes match, control engagement is the structural zero, and treated
/// engagement equals the potential draw.
#[test]
fn latent_rows_are_consistent_with_observed_rows() {
    for seed in 0..20 {
        let trial = gen_dataset(&ScenarioSpec::default(), seed).expect("generation succeeds");
        assert_eq!(trial.data.n(), trial.latent.len());
        for (row, latent) in trial.data.rows().iter().zip(&trial.latent) {
            assert_eq!(row.z, latent.z);
            assert_eq!(row.y, latent.y);
            assert_eq!(row.covariates, vec![latent.l]);
            assert!((0.0..=1.0).contains(&latent.a_pot));
            let expected = if latent.z { latent.a_pot } else { 0.0 };
            assert_eq!(row.a, expected, "engagement inconsistent at seed {seed}");
        }
    }
}

/// One million potential-engagement draws center on the quadrature oracle:
/// the sample mean of A^{z=1} falls within three standard errors of
/// `true_mu_a`.
#[test]
fn latent_engagement_draws_center_on_the_quadrature_oracle() {
    let spec = ScenarioSpec { n: 1_000_000, ..ScenarioSpec::default() };
    let trial = gen_dataset(&spec, 123).expect("generation succeeds");

    let n = trial.latent.len() as f64;
    let mean = trial.latent.iter().map(|r| r.a_pot).sum::<f64>() / n;
    let ss = trial.latent.iter().map(|r| (r.a_pot - mean).powi(2)).sum::<f64>();
    let sd = (ss / (n - 1.0)).sqrt();

    let oracle = true_mu_a(&spec).expect("quadrature converges");
    let tol = 3.0 * sd / n.sqrt();
    assert!(
        (mean - oracle).abs() <= tol,
        "mean potential engagement {mean:.6} vs oracle {oracle:.6} beyond {tol:.6}"
    );
}
