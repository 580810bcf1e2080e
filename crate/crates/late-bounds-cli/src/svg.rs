//! Minimal static SVG rendering of sensitivity curves. Pure shapes and text,
//! no external assets, deterministic output for a given input.

use late_bounds::TransformSpec;

use crate::CliError;

const PALETTE: &[&str] = &["#1b6ca8", "#c2571a", "#2e8540", "#8e44ad", "#b4231f", "#51656e"];

struct Panel {
    x0: f64,
    y0: f64,
    width: f64,
    height: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.x_min) / (self.x_max - self.x_min) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        // SVG y grows downward.
        self.y0 + self.height - (y - self.y_min) / (self.y_max - self.y_min) * self.height
    }

    fn polyline(&self, points: &[(f64, f64)], stroke: &str, dashed: bool) -> String {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        format!(
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
            coords.join(" ")
        )
    }

    fn frame(&self, title: &str, x_label: &str, y_label: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444444\"/>\n",
            self.x0, self.y0, self.width, self.height
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">{title}</text>\n",
            self.x0 + self.width / 2.0,
            self.y0 - 10.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{x_label}</text>\n",
            self.x0 + self.width / 2.0,
            self.y0 + self.height + 28.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{y_label}</text>\n",
            self.x0 - 42.0,
            self.y0 + self.height / 2.0,
            self.x0 - 42.0,
            self.y0 + self.height / 2.0
        ));
        // Tick labels at the corners of each axis.
        for (value, frac) in [(self.x_min, 0.0), (self.x_max, 1.0)] {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{value:.2}</text>\n",
                self.x0 + frac * self.width,
                self.y0 + self.height + 14.0
            ));
        }
        for (value, frac) in [(self.y_min, 0.0), (self.y_max, 1.0)] {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{value:.2}</text>\n",
                self.x0 - 6.0,
                self.y0 + self.height - frac * self.height + 3.0
            ));
        }
        // Zero line when the y range straddles zero.
        if self.y_min < 0.0 && self.y_max > 0.0 {
            out.push_str(&format!(
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#bbbbbb\" stroke-width=\"0.8\"/>\n",
                self.x0,
                self.py(0.0),
                self.x0 + self.width,
                self.py(0.0)
            ));
        }
        out
    }
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

/// Render the two standard sensitivity panels from an ITT estimate and a
/// treated-arm mean transformed engagement:
/// left, the effect curve over engagement `a` for each gamma with the bound
/// envelope; right, the effect at `a = 0` and `a = 1` as gamma varies.
pub fn render_sensitivity(
    delta_itt: f64,
    mu_h: f64,
    gammas: &[f64],
    transform: &TransformSpec,
) -> Result<String, CliError> {
    let est = |gamma: f64, h_a: f64| -> f64 {
        delta_itt * (gamma + (1.0 - gamma) * h_a) / (gamma + (1.0 - gamma) * mu_h)
    };
    let steps = 200usize;
    let a_of = |i: usize| i as f64 / steps as f64;
    let h_at = |a: f64| {
        transform
            .apply(a)
            .map_err(|e| CliError::Estimation(e.to_string()))
    };

    // Left panel data: one curve per gamma plus the gamma = 0 / gamma = 1
    // extreme curves forming the bound envelope.
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for &gamma in gammas {
        let mut pts = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let a = a_of(i);
            pts.push((a, est(gamma, h_at(a)?)));
        }
        curves.push((format!("gamma={gamma}"), pts));
    }
    let mut envelope: Vec<Vec<(f64, f64)>> = Vec::new();
    for gamma in [0.0, 1.0] {
        let mut pts = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let a = a_of(i);
            pts.push((a, est(gamma, h_at(a)?)));
        }
        envelope.push(pts);
    }

    // Right panel data: effect at a = 0 and a = 1 over a dense gamma grid.
    let h0 = h_at(0.0)?;
    let h1 = h_at(1.0)?;
    let mut curve_a0 = Vec::with_capacity(steps + 1);
    let mut curve_a1 = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let gamma = i as f64 / steps as f64;
        curve_a0.push((gamma, est(gamma, h0)));
        curve_a1.push((gamma, est(gamma, h1)));
    }

    let (left_lo, left_hi) = y_range(
        curves
            .iter()
            .flat_map(|(_, pts)| pts.iter().map(|p| p.1))
            .chain(envelope.iter().flatten().map(|p| p.1)),
    );
    let (right_lo, right_hi) =
        y_range(curve_a0.iter().chain(curve_a1.iter()).map(|p| p.1));

    let left = Panel {
        x0: 60.0,
        y0: 40.0,
        width: 360.0,
        height: 300.0,
        x_min: 0.0,
        x_max: 1.0,
        y_min: left_lo,
        y_max: left_hi,
    };
    let right = Panel {
        x0: 540.0,
        y0: 40.0,
        width: 360.0,
        height: 300.0,
        x_min: 0.0,
        x_max: 1.0,
        y_min: right_lo,
        y_max: right_hi,
    };

    let mut svg = String::new();
    svg.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 960 420\" \
         font-family=\"monospace\" fill=\"#222222\">\n",
    );
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"960\" height=\"420\" fill=\"#ffffff\"/>\n");

    svg.push_str(&left.frame("effect vs engagement", "a", "effect"));
    for pts in &envelope {
        svg.push_str(&left.polyline(pts, "#999999", true));
    }
    for (i, (_, pts)) in curves.iter().enumerate() {
        svg.push_str(&left.polyline(pts, PALETTE[i % PALETTE.len()], false));
    }
    // Stationary point: all curves pass through (h^{-1}(mu_h) in a-space);
    // mark the common value at the ITT level.
    svg.push_str(&format!(
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#555555\"/>\n",
        left.px(mu_h.clamp(0.0, 1.0)),
        left.py(delta_itt)
    ));
    // Legend.
    for (i, (label, _)) in curves.iter().enumerate() {
        let y = 52.0 + 14.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"330\" y1=\"{y:.2}\" x2=\"352\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            PALETTE[i % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "<text x=\"356\" y=\"{:.2}\" font-size=\"10\">{label}</text>\n",
            y + 3.0
        ));
    }

    svg.push_str(&right.frame("effect vs gamma", "gamma", "effect"));
    svg.push_str(&right.polyline(&curve_a0, PALETTE[0], false));
    svg.push_str(&right.polyline(&curve_a1, PALETTE[1], false));
    for (i, label) in ["a=0", "a=1"].iter().enumerate() {
        let y = 52.0 + 14.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"810\" y1=\"{y:.2}\" x2=\"832\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            PALETTE[i]
        ));
        svg.push_str(&format!(
            "<text x=\"836\" y=\"{:.2}\" font-size=\"10\">{label}</text>\n",
            y + 3.0
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
