//! Plot-data emission: dense effect curves over (gamma, a) in long CSV form.

use late_bounds::{late_estimate, var_late, GammaValue, IttEstimate, MuHEstimate, TransformSpec};

use crate::CliError;

/// One curve sample. `se`/`ci_lo`/`ci_hi` are populated only when the sweep
/// was estimated from data (explicit-pair sweeps carry no uncertainty).
pub struct SweepRow {
    pub gamma: f64,
    pub a: f64,
    pub h_a: f64,
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

/// Evaluate the sweep grid in (gamma, a)-sorted order. `z` is the normal
/// critical value for large-sample intervals, or `None` to leave the
/// uncertainty columns empty.
pub fn compute_rows(
    itt: &IttEstimate,
    mu: &MuHEstimate,
    gammas: &[GammaValue],
    a_grid: &[f64],
    transform: &TransformSpec,
    z: Option<f64>,
) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::with_capacity(gammas.len() * a_grid.len());
    for &gamma in gammas {
        for &a in a_grid {
            let point = late_estimate(itt, mu, gamma, transform, a)
                .map_err(|e| CliError::Estimation(e.to_string()))?;
            let (se, ci_lo, ci_hi) = match z {
                None => (None, None, None),
                Some(z) => {
                    let bundle = var_late(itt, mu, gamma, point.h_a)
                        .map_err(|e| CliError::Estimation(e.to_string()))?;
                    (
                        Some(bundle.se_late),
                        Some(point.delta - z * bundle.se_late),
                        Some(point.delta + z * bundle.se_late),
                    )
                }
            };
            rows.push(SweepRow {
                gamma: point.gamma.value(),
                a: point.a,
                h_a: point.h_a,
                delta: point.delta,
                lower: point.lower_bound,
                upper: point.upper_bound,
                se,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["gamma", "a", "h_a", "delta", "lower", "upper", "se", "ci_lo", "ci_hi"])
        .map_err(|e| CliError::Io(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        writer
            .write_record([
                row.gamma.to_string(),
                row.a.to_string(),
                row.h_a.to_string(),
                row.delta.to_string(),
                row.lower.to_string(),
                row.upper.to_string(),
                opt(row.se),
                opt(row.ci_lo),
                opt(row.ci_hi),
            ])
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
