//! Minimal SVG charts: marginal line plots and sign-error scatter plots.
//!
//! Output is plain text with coordinates printed at two decimals, so equal
//! inputs give byte-identical files. Every plotted value is also written to a
//! CSV by the caller.

use std::fmt::Write;

use crate::consistency::{ConsistencyEntry, Slice};
use crate::format::sig6;
use crate::stats::{MarginalSet, Statistic};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Plot area with categorical x positions and a linear y range.
struct Frame {
    n_x: usize,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(n_x: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = (hi - lo) * 0.05;
            lo -= pad;
            hi += pad;
        }
        Frame { n_x, y_min: lo, y_max: hi }
    }

    fn x(&self, i: usize) -> f64 {
        let w = WIDTH - LEFT - RIGHT;
        LEFT + w * (i as f64 + 0.5) / self.n_x.max(1) as f64
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - TOP - BOTTOM;
        TOP + h * (self.y_max - v) / (self.y_max - self.y_min)
    }

    fn open(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let bottom = HEIGHT - BOTTOM;
        let right = WIDTH - RIGHT;
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
            (LEFT + right) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            "<path d=\"M{LEFT:.2} {TOP:.2}V{bottom:.2}H{right:.2}\" fill=\"none\" stroke=\"black\"/>"
        );
        for t in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * t as f64 / 4.0;
            let y = self.y(v);
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
                LEFT - 6.0,
                y + 4.0,
                sig(v)
            );
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>",
                LEFT - 3.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            (LEFT + right) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
            (TOP + bottom) / 2.0,
            (TOP + bottom) / 2.0,
            escape(y_label)
        );
    }

    fn x_ticks(&self, out: &mut String, labels: &[String]) {
        let bottom = HEIGHT - BOTTOM;
        for (i, label) in labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                self.x(i),
                bottom + 16.0,
                escape(label)
            );
        }
    }

    fn legend(&self, out: &mut String, names: &[&str]) {
        let x = WIDTH - RIGHT + 16.0;
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 18.0 * i as f64;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
                y,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", x + 16.0, y + 9.0, escape(name));
        }
    }
}

fn sig(v: f64) -> String {
    // Tick labels only; 3 digits keeps them readable.
    crate::format::sig(v, 3)
}

/// Six statistic series against the levels of one dimension, with a vertical
/// line at `tradeoff_level` (an index into `set.levels`).
pub fn marginal_chart(set: &MarginalSet, tradeoff_level: Option<usize>, level_labels: &[String]) -> String {
    let values = Statistic::ALL.iter().flat_map(|s| set.series(*s).iter().copied());
    let frame = Frame::new(set.levels.len(), values);
    let mut out = String::new();
    let title = format!(
        "Marginal sums over {}{}",
        set.dimension.file_stem(),
        if set.normalized { " (per cell)" } else { "" }
    );
    frame.open(&mut out, &title, set.dimension.file_stem(), "statistic");
    frame.x_ticks(&mut out, level_labels);
    if let Some(i) = tradeoff_level {
        let x = frame.x(i);
        let _ = writeln!(
            out,
            "<line class=\"tradeoff\" x1=\"{x:.2}\" y1=\"{TOP:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"2\"/>",
            HEIGHT - BOTTOM
        );
    }
    for (si, stat) in Statistic::ALL.iter().enumerate() {
        let color = PALETTE[si];
        let series = set.series(*stat);
        if series.len() > 1 {
            let points: Vec<String> = series
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{:.2},{:.2}", frame.x(i), frame.y(*v)))
                .collect();
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                points.join(" ")
            );
        }
        for (i, v) in series.iter().enumerate() {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"><title>{} = {}</title></circle>",
                frame.x(i),
                frame.y(*v),
                stat.name(),
                sig6(*v)
            );
        }
    }
    let names: Vec<&str> = Statistic::ALL.iter().map(|s| s.name()).collect();
    frame.legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// One mark per (measure, statistic) at its sign-error, with the 0.5
/// mismatch line.
pub fn sign_error_scatter(slice: Slice, entries: &[ConsistencyEntry]) -> String {
    let entries: Vec<&ConsistencyEntry> = entries.iter().filter(|e| e.slice == slice).collect();
    let mut measures: Vec<String> = entries.iter().map(|e| e.measure_name.clone()).collect();
    measures.sort();
    measures.dedup();
    let frame = Frame {
        n_x: measures.len().max(1),
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut out = String::new();
    frame.open(&mut out, &format!("Sign-error, {} slice", slice.name()), "complexity measure", "se_g");
    frame.x_ticks(&mut out, &measures);
    let y = frame.y(0.5);
    let _ = writeln!(
        out,
        "<line class=\"reference\" x1=\"{LEFT:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        WIDTH - RIGHT
    );
    let half_slot = (WIDTH - LEFT - RIGHT) / frame.n_x as f64 * 0.3;
    for e in &entries {
        let mi = measures.iter().position(|m| *m == e.measure_name).unwrap_or(0);
        let si = Statistic::ERROR_RATE.iter().position(|s| *s == e.statistic).unwrap_or(0);
        let x = frame.x(mi) + half_slot * (si as f64 - 1.0);
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"><title>{} {} = {}</title></circle>",
            frame.y(e.se_g),
            PALETTE[si],
            escape(&e.measure_name),
            e.statistic.name(),
            sig6(e.se_g)
        );
    }
    let names: Vec<&str> = Statistic::ERROR_RATE.iter().map(|s| s.name()).collect();
    frame.legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
