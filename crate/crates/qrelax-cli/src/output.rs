//! Trace/distribution CSV writers and the minimal SVG plot.
//!
//! Trace schema: `k,column_calls,coord,step,D,R,s_x,accel`. Floats carry 17
//! significant digits so files round-trip exactly; absent fields are empty
//! except `coord`, which uses -1 for rows without a coordinate; unbounded
//! acceleration factors serialise as the literal string `inf`. Rows are
//! logged every column call up to 10^4 calls, then once per
//! ceil(budget/10^4) calls, plus the final row.

use qrelax::diagnostics::RateValue;
use qrelax::generators::BatchRateRow;
use qrelax::solvers::TraceRecord;
use std::io::{self, Write};

pub const TRACE_HEADER: &str = "k,column_calls,coord,step,D,R,s_x,accel";
pub const DIST_HEADER: &str = "seed,a_inf,a_inf_up";
const DENSE_ROWS_UP_TO: u64 = 10_000;

fn fe(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn rate_field(v: RateValue) -> String {
    match v {
        RateValue::Finite(x) => fe(x),
        RateValue::Infinite => "inf".to_string(),
    }
}

pub struct TraceWriter<W: Write> {
    out: W,
    stride: u64,
    next_at: u64,
    wall_clock: bool,
    pending: Option<TraceRecord>,
    /// (column_calls, D, R) of the rows actually written, for plotting.
    kept: Vec<(f64, f64, f64)>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, budget: u64, wall_clock: bool) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}{}", if wall_clock { ",wall_ns" } else { "" })?;
        Ok(TraceWriter {
            out,
            stride: budget.div_ceil(DENSE_ROWS_UP_TO).max(1),
            next_at: 0,
            wall_clock,
            pending: None,
            kept: Vec::new(),
        })
    }

    pub fn push(&mut self, rec: &TraceRecord) -> io::Result<()> {
        if rec.column_calls <= DENSE_ROWS_UP_TO || rec.column_calls >= self.next_at {
            self.write_row(rec)?;
            self.pending = None;
        } else {
            self.pending = Some(*rec);
        }
        Ok(())
    }

    /// Flush the final row if thinning skipped it; returns the plot points.
    pub fn finish(mut self) -> io::Result<Vec<(f64, f64, f64)>> {
        if let Some(rec) = self.pending.take() {
            self.write_row(&rec)?;
        }
        self.out.flush()?;
        Ok(self.kept)
    }

    fn write_row(&mut self, rec: &TraceRecord) -> io::Result<()> {
        let coord = rec.coord.map_or(-1i64, |c| c as i64);
        let step = rec.step.map(fe).unwrap_or_default();
        let accel = match rec.accel {
            None => String::new(),
            Some(a) if a.is_infinite() => "inf".to_string(),
            Some(a) => fe(a),
        };
        write!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            rec.k,
            rec.column_calls,
            coord,
            step,
            fe(rec.d),
            fe(rec.r),
            fe(rec.s),
            accel
        )?;
        if self.wall_clock {
            write!(self.out, ",{}", rec.wall_ns)?;
        }
        writeln!(self.out)?;
        self.next_at = (rec.column_calls / self.stride + 1) * self.stride;
        self.kept.push((rec.column_calls as f64, rec.d, rec.r));
        Ok(())
    }
}

pub fn write_distribution(mut out: impl Write, rows: &[BatchRateRow]) -> io::Result<()> {
    writeln!(out, "{DIST_HEADER}")?;
    for row in rows {
        writeln!(out, "{},{},{}", row.seed, rate_field(row.a_inf), rate_field(row.a_inf_up))?;
    }
    out.flush()
}

pub struct Series {
    pub label: &'static str,
    pub points: Vec<(f64, f64)>,
}

fn color_for(tag: &str) -> &'static str {
    match tag {
        "cd-d" => "#1f77b4",
        "sr-d" => "#ff7f0e",
        "h-r" => "#2ca02c",
        "bi-r" => "#d62728",
        "cg-d" => "#9467bd",
        _ => "#444444",
    }
}

/// Objective vs column calls, log-scale y. Polylines, axes and a legend;
/// nothing else.
pub fn render_svg(title: &str, series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    let mut xmax = 1.0f64;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmax = xmax.max(x);
            if y > 0.0 {
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !ymin.is_finite() {
        ymin = 1e-16;
        ymax = 1.0;
    }
    if ymin >= ymax {
        ymin = ymax / 10.0;
    }
    let (ly0, ly1) = (ymin.log10(), ymax.log10());
    let px = |x: f64| L + (x / xmax) * (W - L - R);
    let py = |y: f64| {
        let ly = y.max(ymin).log10();
        H - B - (ly - ly0) / (ly1 - ly0) * (H - T - B)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        (L + W - R) / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - B,
        W - R
    ));
    svg.push_str(&format!("<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{}\" stroke=\"black\"/>\n", H - B));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">column calls (max {xmax:.0})</text>\n",
        (L + W - R) / 2.0,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.1e}</text>\n",
        L - 6.0,
        py(ymax) + 4.0,
        ymax
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.1e}</text>\n",
        L - 6.0,
        py(ymin) + 4.0,
        ymin
    ));
    for (si, s) in series.iter().enumerate() {
        let color = color_for(s.label);
        let pts: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            W - R - 90.0,
            T + 16.0 * si as f64 + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
