//! Command-line front end: data ingestion, analysis reports, simulation
//! studies, and plot-data sweeps.

mod io;
mod report;
mod svg;
mod sweep;
mod table;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use late_bounds::{
    bootstrap, fit_core, normal_quantile, parse_scenario_file, true_gamma, true_mu_a,
    validate_dataset, Adjustment, AnalysisConfig, EstimatorError, GammaValue, InferenceError,
    IttEstimate, IttMethod, KnotPolicy, LateError, ModelError, MuHEstimate, ReportPlan, SimError,
    SplineTerm, TransformError, TransformSpec, TrialDataset,
};

/// Scenario presets shipped inside the binary, addressable by bare name.
const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("t2_g050_mid_n250", include_str!("../../../scenarios/t2_g050_mid_n250.scn")),
    ("t2_g025_low_n250", include_str!("../../../scenarios/t2_g025_low_n250.scn")),
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flag combinations or malformed flag values (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Invalid input data or configuration (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Estimation failed on valid input (exit 3).
    #[error("{0}")]
    Estimation(String),
    /// Filesystem or encoding failure (exit 4).
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<LateError> for CliError {
    fn from(e: LateError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Model(inner) => CliError::Validation(inner.to_string()),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Iteration { .. } => CliError::Estimation(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "late-bounds",
    version,
    about = "Sensitivity analysis for randomized trials with imperfect adherence: \
             treatment-effect curves indexed by engagement, sharp bounds, and \
             inference under a one-parameter exclusion-restriction relaxation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a trial CSV: effect grid, intervals, and threshold solvers
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study from a scenario file
    Simulate(SimulateArgs),
    /// Emit plot-ready effect curves over (gamma, a)
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Table,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trial CSV with header columns z, a, y (other columns are covariates)
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated gamma values in [0, 1]
    #[arg(long = "gamma-grid", default_value = "0,0.25,0.5,0.75,1")]
    gamma_grid: String,
    /// Comma-separated engagement values, or `auto` for {0, 0.25, mu_h, 1}
    #[arg(long = "a-grid", default_value = "auto")]
    a_grid: String,
    /// Engagement transform: identity | threshold:Z | table:PATH
    #[arg(long, default_value = "identity")]
    transform: String,
    /// Covariate columns to adjust for, comma-separated
    #[arg(long)]
    adjust: Option<String>,
    /// Restricted-cubic-spline expansion COL:quartiles or COL:k1,k2,k3 (repeatable)
    #[arg(long = "spline")]
    splines: Vec<String>,
    /// ITT estimator: diff | ols (default diff, or ols when adjusting)
    #[arg(long)]
    itt: Option<String>,
    /// Bootstrap replicates for quantile intervals
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    /// Confidence level in (0, 1)
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solve for the smallest gamma keeping |xi| at or below this value
    #[arg(long = "xi-threshold")]
    xi_threshold: Option<f64>,
    /// Solve for the smallest engagement with |effect| at or above this value
    #[arg(long = "effect-threshold")]
    effect_threshold: Option<f64>,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    /// Also write a two-panel SVG of the sensitivity curves
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Bundled scenario name (t2_g050_mid_n250, t2_g025_low_n250) or a file path
    #[arg(long)]
    scenario: String,
    /// Monte Carlo iterations (default 200; 1000 with --full)
    #[arg(long)]
    k: Option<usize>,
    /// Bootstrap replicates per iteration (default 200; 500 with --full; 0 skips)
    #[arg(long)]
    b: Option<usize>,
    /// Heavier preset: K = 1000, B = 500
    #[arg(long)]
    full: bool,
    /// Bias sweep over specified gamma values with the bootstrap skipped
    #[arg(long)]
    misspec: bool,
    /// Comma-separated gamma values (default: the scenario's true gamma)
    #[arg(long = "gamma-grid")]
    gamma_grid: Option<String>,
    /// Comma-separated engagement values, or `auto` for {0, 0.25, mu_A, 1}
    #[arg(long = "a-grid", default_value = "0,1")]
    a_grid: String,
    /// Master RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the summary here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepArgs {
    /// Trial CSV to estimate (delta_itt, mu_h) from
    #[arg(long)]
    data: Option<PathBuf>,
    /// Explicit ITT effect (pairs with --mu-h; conflicts with --data)
    #[arg(long = "delta-itt", allow_negative_numbers = true)]
    delta_itt: Option<f64>,
    /// Explicit treated-arm mean transformed engagement in (0, 1]
    #[arg(long = "mu-h")]
    mu_h: Option<f64>,
    /// Comma-separated gamma values in [0, 1]
    #[arg(long = "gamma-grid", default_value = "0,0.25,0.5,0.75,1")]
    gamma_grid: String,
    /// Engagement grid: dense:N | auto | comma-separated list
    #[arg(long = "a-grid", default_value = "dense:101")]
    a_grid: String,
    /// Engagement transform: identity | threshold:Z | table:PATH
    #[arg(long, default_value = "identity")]
    transform: String,
    /// Covariate columns to adjust for, comma-separated (data mode)
    #[arg(long)]
    adjust: Option<String>,
    /// Spline expansion COL:quartiles or COL:k1,k2,k3 (repeatable, data mode)
    #[arg(long = "spline")]
    splines: Vec<String>,
    /// ITT estimator: diff | ols (data mode)
    #[arg(long)]
    itt: Option<String>,
    /// Confidence level for large-sample intervals (data mode)
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Master RNG seed (sweeps are deterministic; recorded for provenance)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a two-panel SVG of the sensitivity curves
    #[arg(long)]
    svg: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let threads = match thread_limit_from_env() {
        Ok(limit) => limit,
        Err(message) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
    };
    if let Err(err) = late_bounds::with_thread_limit(threads, || dispatch(cli)) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn thread_limit_from_env() -> Result<Option<usize>, String> {
    match std::env::var("LATE_BOUNDS_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("LATE_BOUNDS_THREADS: {e}")),
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .map_err(|_| format!("LATE_BOUNDS_THREADS must be a positive integer, got `{raw}`"))?;
            if n == 0 {
                return Err("LATE_BOUNDS_THREADS must be at least 1".to_string());
            }
            Ok(Some(n))
        }
    }
}

// ---------------------------------------------------------------------------
// Flag parsing helpers
// ---------------------------------------------------------------------------

fn parse_f64_list(raw: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        out.push(
            token
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--{flag}: `{token}` is not a number")))?,
        );
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("--{flag}: no values given")));
    }
    Ok(out)
}

fn sorted_dedup(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

fn parse_gamma_grid(raw: &str) -> Result<Vec<GammaValue>, CliError> {
    sorted_dedup(parse_f64_list(raw, "gamma-grid")?)
        .into_iter()
        .map(|g| GammaValue::new(g).map_err(CliError::from))
        .collect()
}

fn parse_transform(raw: &str) -> Result<TransformSpec, CliError> {
    if raw == "identity" {
        return Ok(TransformSpec::identity());
    }
    if let Some(rest) = raw.strip_prefix("threshold:") {
        let zeta: f64 = rest.parse().map_err(|_| {
            CliError::Usage(format!("--transform threshold: `{rest}` is not a number"))
        })?;
        return TransformSpec::threshold(zeta).map_err(CliError::from);
    }
    if let Some(rest) = raw.strip_prefix("table:") {
        let points = io::read_transform_table(Path::new(rest))?;
        return TransformSpec::table(points).map_err(CliError::from);
    }
    Err(CliError::Usage(format!(
        "--transform: expected identity | threshold:Z | table:PATH, got `{raw}`"
    )))
}

fn parse_splines(raws: &[String]) -> Result<Vec<SplineTerm>, CliError> {
    raws.iter()
        .map(|raw| {
            let (column, policy) = raw.split_once(':').ok_or_else(|| {
                CliError::Usage(format!(
                    "--spline: expected COL:quartiles or COL:k1,k2,..., got `{raw}`"
                ))
            })?;
            let policy = if policy == "quartiles" {
                KnotPolicy::Quartiles
            } else {
                KnotPolicy::Explicit(parse_f64_list(policy, "spline")?)
            };
            Ok(SplineTerm { column: column.to_string(), policy })
        })
        .collect()
}

fn build_adjustment(
    adjust: Option<&str>,
    splines: &[String],
    data: &TrialDataset,
) -> Result<Adjustment, CliError> {
    let columns: Vec<String> = adjust
        .map(|raw| {
            raw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let splines = parse_splines(splines)?;
    for name in columns.iter().chain(splines.iter().map(|s| &s.column)) {
        if data.covariate_index(name).is_none() {
            return Err(CliError::Validation(format!(
                "adjustment column `{name}` is not in the dataset (available: {})",
                data.covariate_names().join(", ")
            )));
        }
    }
    Ok(Adjustment { columns, splines })
}

fn resolve_itt_method(
    explicit: Option<&str>,
    adjustment: &Adjustment,
) -> Result<IttMethod, CliError> {
    match explicit {
        None => Ok(if adjustment.is_empty() {
            IttMethod::DiffMeans
        } else {
            IttMethod::OlsAdjusted
        }),
        Some("diff") => {
            if !adjustment.is_empty() {
                return Err(CliError::Usage(
                    "--itt diff cannot be combined with --adjust/--spline; use --itt ols".into(),
                ));
            }
            Ok(IttMethod::DiffMeans)
        }
        Some("ols") => Ok(IttMethod::OlsAdjusted),
        Some(other) => Err(CliError::Usage(format!("--itt: expected diff | ols, got `{other}`"))),
    }
}

/// Resolve an engagement grid: `auto` (needs a mean transformed engagement)
/// or an explicit list; values must lie in [0, 1].
fn resolve_a_grid(raw: &str, mu_h: Option<f64>) -> Result<Vec<f64>, CliError> {
    if raw == "auto" {
        let Some(mu) = mu_h else {
            return Err(CliError::Usage(
                "--a-grid auto needs an estimated or supplied mean engagement".into(),
            ));
        };
        return Ok(sorted_dedup(vec![0.0, 0.25, mu, 1.0]));
    }
    let grid = sorted_dedup(parse_f64_list(raw, "a-grid")?);
    for &a in &grid {
        if !a.is_finite() || !(0.0..=1.0).contains(&a) {
            return Err(CliError::Validation(format!(
                "--a-grid: engagement {a} outside [0, 1]"
            )));
        }
    }
    Ok(grid)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn write_svg(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let io::LoadedCsv { rows, covariate_names, path, sha256 } = io::read_trial_csv(&args.data)?;
    let data = validate_dataset(rows, covariate_names)?;

    let transform = parse_transform(&args.transform)?;
    let adjustment = build_adjustment(args.adjust.as_deref(), &args.splines, &data)?;
    let itt_method = resolve_itt_method(args.itt.as_deref(), &adjustment)?;
    let gamma_grid = parse_gamma_grid(&args.gamma_grid)?;

    let mut config = AnalysisConfig {
        gamma_grid,
        a_grid: vec![0.0], // placeholder until mu_h is known
        transform,
        itt_method,
        adjustment,
        bootstrap_reps: args.bootstrap,
        ci_level: args.level,
        seed: args.seed,
    };
    config.validate()?;

    let (itt, mu) = fit_core(&data, &config)?;
    config.a_grid = resolve_a_grid(&args.a_grid, Some(mu.mu_h))?;
    config.validate()?;

    let plan = ReportPlan::full(&config);
    let boot = bootstrap(&data, &config, &plan)?;
    let report = report::build_report(
        &data,
        &config,
        &plan,
        &itt,
        &mu,
        &boot,
        args.xi_threshold,
        args.effect_threshold,
        &path,
        &sha256,
    )?;

    let content = match args.format {
        OutputFormat::Json => to_json(&report)?,
        OutputFormat::Table => table::render_analysis(&report),
        OutputFormat::Csv => report::grid_csv(&report)?,
    };
    io::write_output(args.out.as_deref(), &content)?;

    if let Some(svg_path) = &args.svg {
        let gammas: Vec<f64> = config.gamma_grid.iter().map(|g| g.value()).collect();
        let image = svg::render_sensitivity(itt.delta_itt, mu.mu_h, &gammas, &config.transform)?;
        write_svg(svg_path, &image)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn resolve_scenario(name: &str) -> Result<String, CliError> {
    if let Some((_, text)) = BUNDLED_SCENARIOS.iter().find(|(n, _)| *n == name) {
        return Ok((*text).to_string());
    }
    let path = Path::new(name);
    if path.exists() {
        return std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())));
    }
    Err(CliError::Io(format!(
        "scenario `{name}` is neither a bundled scenario ({}) nor an existing file",
        BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
    )))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let text = resolve_scenario(&args.scenario)?;
    let spec = parse_scenario_file(&text)?;

    if args.misspec && args.b.is_some_and(|b| b > 0) {
        return Err(CliError::Usage(
            "--misspec skips the bootstrap; drop --b or set it to 0".into(),
        ));
    }
    let k = args.k.unwrap_or(if args.full { 1000 } else { 200 });
    let b = if args.misspec {
        0
    } else {
        args.b.unwrap_or(if args.full { 500 } else { 200 })
    };
    if k < 10 {
        eprintln!(
            "warning: --k {k} is very small; the empirical standard error (ESE) will be unreliable"
        );
    }

    let gammas = match &args.gamma_grid {
        Some(raw) => parse_gamma_grid(raw)?,
        None if args.misspec => parse_gamma_grid("0,0.25,0.5,0.75,1")?,
        None => {
            let g0 = true_gamma(spec.beta1, spec.beta2)?;
            vec![GammaValue::new(g0).map_err(|e| {
                CliError::Validation(format!(
                    "scenario's true gamma {g0} lies outside [0, 1]; pass --gamma-grid ({e})"
                ))
            })?]
        }
    };
    let a_grid = if args.a_grid == "auto" {
        sorted_dedup(vec![0.0, 0.25, true_mu_a(&spec)?, 1.0])
    } else {
        resolve_a_grid(&args.a_grid, None)?
    };

    let summary = late_bounds::monte_carlo(&spec, &gammas, &a_grid, k, b, args.seed)?;
    let content = match args.format {
        OutputFormat::Json => to_json(&summary)?,
        OutputFormat::Table => table::render_mc(&summary),
        OutputFormat::Csv => table::mc_csv(&summary)?,
    };
    io::write_output(args.out.as_deref(), &content)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn resolve_sweep_a_grid(raw: &str, mu_h: f64) -> Result<Vec<f64>, CliError> {
    if let Some(rest) = raw.strip_prefix("dense:") {
        let n: usize = rest.parse().map_err(|_| {
            CliError::Usage(format!("--a-grid dense: `{rest}` is not an integer"))
        })?;
        if n < 2 {
            return Err(CliError::Usage("--a-grid dense:N needs N >= 2".into()));
        }
        return Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect());
    }
    resolve_a_grid(raw, Some(mu_h))
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let explicit = args.delta_itt.is_some() || args.mu_h.is_some();
    if args.data.is_some() && explicit {
        return Err(CliError::Validation(
            "--data conflicts with --delta-itt/--mu-h; supply exactly one input mode".into(),
        ));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Validation(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }
    let transform = parse_transform(&args.transform)?;
    let gammas = parse_gamma_grid(&args.gamma_grid)?;

    let (itt, mu, with_se) = if let Some(data_path) = &args.data {
        let io::LoadedCsv { rows, covariate_names, .. } = io::read_trial_csv(data_path)?;
        let data = validate_dataset(rows, covariate_names)?;
        let adjustment = build_adjustment(args.adjust.as_deref(), &args.splines, &data)?;
        let itt_method = resolve_itt_method(args.itt.as_deref(), &adjustment)?;
        let config = AnalysisConfig {
            gamma_grid: gammas.clone(),
            a_grid: vec![0.0],
            transform: transform.clone(),
            itt_method,
            adjustment,
            bootstrap_reps: 2, // sweeps never bootstrap; minimal valid value
            ci_level: args.level,
            seed: args.seed,
        };
        config.validate()?;
        let (itt, mu) = fit_core(&data, &config)?;
        (itt, mu, true)
    } else {
        let (Some(delta_itt), Some(mu_h)) = (args.delta_itt, args.mu_h) else {
            return Err(CliError::Validation(
                "supply either --data PATH or both --delta-itt and --mu-h".into(),
            ));
        };
        if !delta_itt.is_finite() {
            return Err(CliError::Validation(format!(
                "--delta-itt must be finite, got {delta_itt}"
            )));
        }
        if !mu_h.is_finite() || !(mu_h > 0.0 && mu_h <= 1.0) {
            return Err(CliError::Validation(format!(
                "--mu-h must lie in (0, 1], got {mu_h}"
            )));
        }
        // Variance fields are never read in an explicit-pair sweep.
        let itt = IttEstimate {
            delta_itt,
            sigma2_itt: f64::NAN,
            method: IttMethod::DiffMeans,
            n_total: 0,
        };
        let mu = MuHEstimate { mu_h, sigma2_h: f64::NAN, n1: 0 };
        (itt, mu, false)
    };

    let a_grid = resolve_sweep_a_grid(&args.a_grid, mu.mu_h)?;
    let z = normal_quantile(1.0 - (1.0 - args.level) / 2.0);
    let rows = sweep::compute_rows(&itt, &mu, &gammas, &a_grid, &transform, with_se.then_some(z))?;
    io::write_output(args.out.as_deref(), &sweep::to_csv(&rows)?)?;

    if let Some(svg_path) = &args.svg {
        let gamma_values: Vec<f64> = gammas.iter().map(|g| g.value()).collect();
        let image =
            svg::render_sensitivity(itt.delta_itt, mu.mu_h, &gamma_values, &transform)?;
        write_svg(svg_path, &image)?;
    }
    Ok(())
}
