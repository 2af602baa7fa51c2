//! Minimal SVG renderer for one channel's detection picture: observed
//! series, ensemble mean, the mean plus/minus `band_k` predictive standard
//! deviations as a filled band, and flagged segments as shaded rectangles.
//! Output is a pure function of the inputs, so rendered files are
//! byte-stable across runs.

use varband_core::Segment;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 32.0;

pub struct PlotSeries<'a> {
    pub observed: &'a [f64],
    pub mean: &'a [f64],
    pub variance: &'a [f64],
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

struct Frame {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, i: usize) -> f64 {
        let span = (self.n.max(2) - 1) as f64;
        MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) * i as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        HEIGHT - MARGIN_BOTTOM - (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) * t
    }
}

fn polyline(out: &mut String, frame: &Frame, values: &[f64], class: &str, stroke: &str) {
    if values.iter().all(|v| !v.is_finite()) {
        return;
    }
    out.push_str(&format!(
        "<polyline class=\"{class}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1\" points=\""
    ));
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() {
            out.push_str(&format!("{:.2},{:.2} ", frame.x(i), frame.y(v)));
        }
    }
    out.push_str("\"/>\n");
}

/// Renders the channel plot. Series slices must share a length; points
/// with non-finite values are skipped. An empty series still yields a
/// well-formed document with axes and title.
pub fn render_plot(
    title: &str,
    series: &PlotSeries<'_>,
    band_k: f64,
    segments: &[Segment],
) -> String {
    let n = series
        .observed
        .len()
        .min(series.mean.len())
        .min(series.variance.len());

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut track = |v: f64| {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    };
    for i in 0..n {
        track(series.observed[i]);
        let sd = series.variance[i].max(0.0).sqrt();
        track(series.mean[i] - band_k * sd);
        track(series.mean[i] + band_k * sd);
    }
    if !(lo < hi) {
        lo = if lo.is_finite() { lo - 1.0 } else { -1.0 };
        hi = lo + 2.0;
    }
    let pad = 0.05 * (hi - lo);
    let frame = Frame {
        n,
        lo: lo - pad,
        hi: hi + pad,
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{MARGIN_LEFT}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        escape(title)
    ));

    for seg in segments {
        if seg.start >= n {
            continue;
        }
        let x0 = frame.x(seg.start);
        let x1 = frame.x(seg.end.min(n - 1));
        out.push_str(&format!(
            "<rect class=\"anomaly-segment\" x=\"{:.2}\" y=\"{MARGIN_TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#e4572e\" fill-opacity=\"0.25\"/>\n",
            x0,
            (x1 - x0).max(1.0),
            HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        ));
    }

    let band_ok = (0..n).any(|i| {
        series.mean[i].is_finite() && series.variance[i].is_finite() && series.variance[i] >= 0.0
    });
    if band_ok {
        out.push_str("<polygon class=\"band\" fill=\"#4682b4\" fill-opacity=\"0.2\" points=\"");
        for i in 0..n {
            let sd = series.variance[i].max(0.0).sqrt();
            let v = series.mean[i] + band_k * sd;
            if v.is_finite() {
                out.push_str(&format!("{:.2},{:.2} ", frame.x(i), frame.y(v)));
            }
        }
        for i in (0..n).rev() {
            let sd = series.variance[i].max(0.0).sqrt();
            let v = series.mean[i] - band_k * sd;
            if v.is_finite() {
                out.push_str(&format!("{:.2},{:.2} ", frame.x(i), frame.y(v)));
            }
        }
        out.push_str("\"/>\n");
    }

    polyline(&mut out, &frame, series.mean, "mean", "#1f5fa8");
    polyline(&mut out, &frame, series.observed, "observed", "#333333");

    let axis_y = HEIGHT - MARGIN_BOTTOM;
    out.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{axis_y}\" stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{axis_y}\" x2=\"{:.2}\" y2=\"{axis_y}\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_RIGHT
    ));

    let legend_x = WIDTH - 200.0;
    for (row, (color, label)) in [
        ("#333333", "observed"),
        ("#1f5fa8", "ensemble mean"),
        ("#e4572e", "flagged segment"),
    ]
    .iter()
    .enumerate()
    {
        let y = MARGIN_TOP + 14.0 * (row as f64 + 1.0);
        out.push_str(&format!(
            "<rect x=\"{legend_x}\" y=\"{:.2}\" width=\"10\" height=\"3\" fill=\"{color}\"/>\n",
            y - 3.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\">{label}</text>\n",
            legend_x + 14.0
        ));
    }

    out.push_str("</svg>\n");
    out
}
