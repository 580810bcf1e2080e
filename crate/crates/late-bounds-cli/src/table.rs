//! Aligned-text rendering of reports for terminal consumption.

use late_bounds::{EngagementSolution, McSummary};

use crate::report::AnalysisReport;

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        "<1e-4".to_string()
    } else {
        format!("{p:.4}")
    }
}

fn fmt_level(level: f64) -> String {
    let pct = level * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{:.0}%", pct)
    } else {
        format!("{:.1}%", pct)
    }
}

/// Right-align `cell` in a column of width `w`.
fn pad(cell: &str, w: usize) -> String {
    format!("{cell:>w$}")
}

/// Render rows of cells with per-column widths; first column left-aligned.
fn render_rows(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                line.push_str(&format!("{:<w$}", cell, w = widths[0]));
            } else {
                line.push_str("  ");
                line.push_str(&pad(cell, widths[j]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn render_analysis(report: &AnalysisReport) -> String {
    let meta = &report.metadata;
    let mut out = String::new();
    out.push_str("LATE sensitivity report\n");
    out.push_str("=======================\n");
    out.push_str(&format!("input:      {}\n", meta.input_path));
    out.push_str(&format!("sha256:     {}\n", meta.input_sha256));
    out.push_str(&format!(
        "n:          {} (treated {}, control {})\n",
        meta.n_total, meta.n_treated, meta.n_control
    ));
    out.push_str(&format!("transform:  {}\n", meta.transform));
    out.push_str(&format!("itt method: {}\n", meta.itt_method));
    if !meta.adjust.is_empty() {
        out.push_str(&format!("adjust:     {}\n", meta.adjust.join(", ")));
    }
    if !meta.splines.is_empty() {
        out.push_str(&format!("splines:    {}\n", meta.splines.join(", ")));
    }
    out.push_str(&format!(
        "bootstrap:  B = {} (redraws {}), level {}, seed {}\n",
        meta.bootstrap_reps,
        meta.bootstrap_redraws,
        fmt_level(meta.ci_level),
        meta.seed
    ));
    out.push('\n');

    let level = fmt_level(meta.ci_level);
    let mut head = vec![
        "quantity".to_string(),
        "estimate".to_string(),
        "se(LST)".to_string(),
        "se(boot)".to_string(),
        format!("{level} CI"),
        "W".to_string(),
        "p".to_string(),
    ];
    let mut rows = Vec::new();
    rows.push(std::mem::take(&mut head));
    rows.push(vec![
        "itt".to_string(),
        fmt3(report.itt.estimate.delta_itt),
        fmt3(report.itt.se),
        fmt3(report.itt.se_boot),
        format!("[{}, {}]", fmt3(report.itt.ci_lower), fmt3(report.itt.ci_upper)),
        report.itt.wald_statistic.map(|w| format!("{w:.2}")).unwrap_or_else(|| "-".into()),
        report.itt.p_value.map(fmt_p).unwrap_or_else(|| "-".into()),
    ]);
    rows.push(vec![
        "mu_h".to_string(),
        fmt3(report.mu_h.estimate.mu_h),
        fmt3(report.mu_h.se),
        fmt3(report.mu_h.se_boot),
        format!("[{}, {}]", fmt3(report.mu_h.ci_lower), fmt3(report.mu_h.ci_upper)),
        "-".to_string(),
        "-".to_string(),
    ]);
    out.push_str(&render_rows(&rows));
    out.push('\n');

    // Grid as a gamma-by-a matrix of "estimate [ci_lo, ci_hi]" cells.
    let mut a_values: Vec<f64> = Vec::new();
    for cell in &report.grid {
        if !a_values.iter().any(|&v| v == cell.point.a) {
            a_values.push(cell.point.a);
        }
    }
    let mut gamma_values: Vec<f64> = Vec::new();
    for cell in &report.grid {
        if !gamma_values.iter().any(|&v| v == cell.point.gamma.value()) {
            gamma_values.push(cell.point.gamma.value());
        }
    }
    out.push_str(&format!(
        "treatment effect by gamma and engagement a ({level} bootstrap CI; * fixed by convention)\n"
    ));
    let mut matrix = Vec::new();
    let mut header = vec!["gamma \\ a".to_string()];
    header.extend(a_values.iter().map(|a| fmt3(*a)));
    matrix.push(header);
    for &g in &gamma_values {
        let mut row = vec![fmt3(g)];
        for &a in &a_values {
            let cell = report
                .grid
                .iter()
                .find(|c| c.point.gamma.value() == g && c.point.a == a)
                .expect("grid is complete over gamma x a");
            let star = if cell.convention { "*" } else { "" };
            row.push(format!(
                "{}{} [{}, {}]",
                fmt3(cell.point.delta),
                star,
                fmt3(cell.ci_lower),
                fmt3(cell.ci_upper)
            ));
        }
        matrix.push(row);
    }
    out.push_str(&render_rows(&matrix));
    out.push('\n');

    out.push_str("never-taker sensitivity xi(gamma)\n");
    let mut xi_rows = vec![vec![
        "gamma".to_string(),
        "xi".to_string(),
        "se(LST)".to_string(),
        "se(boot)".to_string(),
        format!("{level} CI"),
    ]];
    for row in &report.xi_table {
        xi_rows.push(vec![
            fmt3(row.gamma),
            fmt3(row.xi),
            fmt3(row.se),
            fmt3(row.se_boot),
            format!("[{}, {}]", fmt3(row.ci_lower), fmt3(row.ci_upper)),
        ]);
    }
    out.push_str(&render_rows(&xi_rows));

    let th = &report.thresholds;
    if th.xi_threshold.is_some() || th.effect_threshold.is_some() {
        out.push('\n');
        out.push_str("thresholds\n");
        if let Some(t) = th.xi_threshold {
            match th.gamma_star {
                Some(g) => out.push_str(&format!(
                    "  |xi| <= {t} for all gamma >= gamma* = {:.4}\n",
                    g.value()
                )),
                None => out.push_str(&format!(
                    "  |xi| <= {t} holds for no gamma in [0, 1)\n"
                )),
            }
        }
        if let Some(t) = th.effect_threshold {
            out.push_str(&format!("  minimal engagement a* with |effect| >= {t}:\n"));
            let delta_itt = report.itt.estimate.delta_itt;
            let mu_h = report.mu_h.estimate.mu_h;
            for cell in &th.a_star {
                let g = cell.gamma;
                // Effect at zero engagement (h(0) = 0 for every valid
                // transform), to tell "met everywhere" from "met nowhere".
                let delta_at_zero = delta_itt * g / (g + (1.0 - g) * mu_h);
                let text = match &cell.solution {
                    None if delta_at_zero.abs() >= t => {
                        "met at every engagement level".to_string()
                    }
                    None => "not reached at any engagement level".to_string(),
                    Some(EngagementSolution::Unique { a_star }) => format!("a* = {a_star:.4}"),
                    Some(EngagementSolution::ThresholdBoundary { zeta }) => {
                        format!("boundary of threshold transform at zeta = {zeta:.4}")
                    }
                };
                out.push_str(&format!("    gamma = {:>5}  {}\n", fmt3(cell.gamma), text));
            }
        }
    }
    out
}

fn opt3(v: Option<f64>) -> String {
    v.map(fmt3).unwrap_or_else(|| "-".into())
}

pub fn render_mc(summary: &McSummary) -> String {
    let mut out = String::new();
    out.push_str("Monte Carlo summary\n");
    out.push_str("===================\n");
    out.push_str(&format!(
        "K = {} iterations, B = {} bootstrap reps, n = {} per trial, seed = {}\n\n",
        summary.k, summary.b, summary.n, summary.seed
    ));
    let mut rows = vec![vec![
        "quantity".to_string(),
        "gamma".to_string(),
        "a".to_string(),
        "mean est".to_string(),
        "ESE".to_string(),
        "mean se(LST)".to_string(),
        "mean se(boot)".to_string(),
    ]];
    for row in &summary.rows {
        rows.push(vec![
            row.label.clone(),
            opt3(row.gamma),
            opt3(row.a),
            fmt3(row.mean_est),
            fmt3(row.ese),
            opt3(row.mean_se_lst),
            opt3(row.mean_se_boot),
        ]);
    }
    out.push_str(&render_rows(&rows));
    out
}

pub fn mc_csv(summary: &McSummary) -> Result<String, crate::CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["label", "gamma", "a", "mean_est", "ese", "mean_se_lst", "mean_se_boot"])
        .map_err(|e| crate::CliError::Io(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &summary.rows {
        writer
            .write_record([
                row.label.clone(),
                opt(row.gamma),
                opt(row.a),
                row.mean_est.to_string(),
                row.ese.to_string(),
                opt(row.mean_se_lst),
                opt(row.mean_se_boot),
            ])
            .map_err(|e| crate::CliError::Io(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| crate::CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| crate::CliError::Io(e.to_string()))
}
