//! Minimal self-contained SVG renderer for convergence plots: iteration on
//! the x axis, gap on a log10 y axis, one polyline per series plus optional
//! theoretical envelopes. All styling is inline so the output is a single
//! diff-able file with no external assets.

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    /// (iteration, gap); non-positive gaps are dropped (log scale).
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

pub fn render_svg(series: &[Series], title: &str) -> String {
    let (width, height) = (860.0, 560.0);
    let (ml, mr, mt, mb) = (72.0, 24.0, 46.0, 54.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let mut x_max: f64 = 1.0;
    let mut log_min = f64::INFINITY;
    let mut log_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if y > 0.0 {
                x_max = x_max.max(x);
                log_min = log_min.min(y.log10());
                log_max = log_max.max(y.log10());
            }
        }
    }
    if !log_min.is_finite() {
        log_min = -1.0;
        log_max = 1.0;
    }
    let y_lo = log_min.floor();
    let y_hi = log_max.ceil().max(y_lo + 1.0);

    let sx = |x: f64| ml + pw * x / x_max;
    let sy = |logy: f64| mt + ph * (y_hi - logy) / (y_hi - y_lo);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        escape(title)
    ));

    // Frame.
    svg.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n"
    ));

    // y ticks: one per decade (thinned when crowded).
    let decades = (y_hi - y_lo) as i64;
    let stride = (decades / 12).max(1);
    let mut d = y_lo as i64;
    while d <= y_hi as i64 {
        let y = sy(d as f64);
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n",
            ml + pw
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">1e{d}</text>\n",
            ml - 6.0,
            y + 4.0
        ));
        d += stride;
    }

    // x ticks: about eight round intervals.
    let step = nice_step(x_max / 8.0);
    let mut x = 0.0;
    while x <= x_max + 1e-9 {
        let px = sx(x);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#333\" stroke-width=\"1\"/>\n",
            mt + ph,
            mt + ph + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x}</text>\n",
            mt + ph + 18.0
        ));
        x += step;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">iteration k</text>\n",
        ml + pw / 2.0,
        height - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">value gap</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0
    ));

    // Curves.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|&&(_, y)| y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.log10())))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>\n",
            pts.join(" ")
        ));
    }

    // Legend, top right inside the frame.
    let lx = ml + pw - 250.0;
    let mut ly = mt + 16.0;
    svg.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"244\" height=\"{}\" fill=\"white\" stroke=\"#999\" stroke-width=\"0.5\" opacity=\"0.9\"/>\n",
        lx - 6.0,
        ly - 12.0,
        series.len() * 18 + 8
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>\n",
            lx + 26.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            lx + 32.0,
            ly + 4.0,
            escape(&s.label)
        ));
        ly += 18.0;
    }
    svg.push_str("</svg>\n");
    svg
}

fn nice_step(raw: f64) -> f64 {
    if raw <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(raw.log10().floor());
    let unit = raw / mag;
    let nice = if unit <= 1.0 {
        1.0
    } else if unit <= 2.0 {
        2.0
    } else if unit <= 5.0 {
        5.0
    } else {
        10.0
    };
    (nice * mag).max(1.0)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
