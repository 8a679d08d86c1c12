//! Self-contained SVG line plots.
//!
//! Coordinates are printed with three decimals so identical data gives
//! identical files. No timestamps are embedded.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::reduction::ComponentSeries;
use crate::series::NamedTable;
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Azimuth of the axonometric view, degrees.
pub const AZIMUTH_DEG: f64 = -60.0;
/// Elevation of the axonometric view, degrees.
pub const ELEVATION_DEG: f64 = 30.0;

/// What to draw from a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlotSpec {
    /// Columns against time; empty means all columns.
    Time {
        #[serde(default)]
        columns: Vec<String>,
    },
    /// One column against another (`t` allowed).
    Pair { x: String, y: String },
    /// Fixed-angle projection of three columns.
    Axonometric { x: String, y: String, z: String },
}

/// Render `spec` from a parsed table.
pub fn render_plot(table: &NamedTable, spec: &PlotSpec, title: &str) -> Result<String> {
    if table.times.is_empty() {
        return Err(Error::validation("cannot plot an empty series"));
    }
    let column = |name: &str| -> Result<Vec<f64>> {
        if name == "t" {
            return Ok(table.times.clone());
        }
        table
            .column_index(name)
            .map(|j| table.values.col(j))
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown column `{name}`; available: t,{}",
                    table.columns.join(",")
                ))
            })
    };
    match spec {
        PlotSpec::Time { columns } => {
            let names: Vec<String> = if columns.is_empty() {
                table.columns.clone()
            } else {
                columns.clone()
            };
            let mut lines = Vec::with_capacity(names.len());
            for n in &names {
                lines.push((n.clone(), column(n)?));
            }
            time_plot(&table.times, &lines, title)
        }
        PlotSpec::Pair { x, y } => pair_plot(&column(x)?, &column(y)?, x, y, title),
        PlotSpec::Axonometric { x, y, z } => {
            axonometric_plot([&column(x)?, &column(y)?, &column(z)?], [x, y, z], title)
        }
    }
}

/// Several series against a shared time axis.
pub fn time_plot(times: &[f64], lines: &[(String, Vec<f64>)], title: &str) -> Result<String> {
    if times.is_empty() || lines.is_empty() {
        return Err(Error::validation("cannot plot an empty series"));
    }
    if lines.iter().any(|(_, v)| v.len() != times.len()) {
        return Err(Error::validation("series length differs from time axis"));
    }
    let (ylo, yhi) = bounds(lines.iter().flat_map(|(_, v)| v.iter().copied()));
    let frame = Frame::new(bounds(times.iter().copied()), (ylo, yhi));
    let mut svg = frame.open(title, "t", "");
    for (i, (name, v)) in lines.iter().enumerate() {
        svg.push_str(&frame.polyline(times, v, PALETTE[i % PALETTE.len()]));
        legend(&mut svg, i, name);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// `y` against `x`.
pub fn pair_plot(x: &[f64], y: &[f64], xlabel: &str, ylabel: &str, title: &str) -> Result<String> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::validation("pair plot needs two non-empty series of equal length"));
    }
    let frame = Frame::new(bounds(x.iter().copied()), bounds(y.iter().copied()));
    let mut svg = frame.open(title, xlabel, ylabel);
    svg.push_str(&frame.polyline(x, y, PALETTE[0]));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Project three series onto the view plane.
///
/// Each coordinate is scaled to `[−1, 1]`, then
/// `u = cos(az)·x − sin(az)·y` and `v = sin(el)·(sin(az)·x + cos(az)·y) + cos(el)·z`.
pub fn axonometric_plot(cols: [&[f64]; 3], labels: [&str; 3], title: &str) -> Result<String> {
    let n = cols[0].len();
    if n == 0 || cols.iter().any(|c| c.len() != n) {
        return Err(Error::validation("axonometric plot needs three non-empty series of equal length"));
    }
    let scaled: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let (lo, hi) = bounds(c.iter().copied());
            c.iter().map(|v| 2.0 * (v - lo) / (hi - lo) - 1.0).collect()
        })
        .collect();
    let (az, el) = (AZIMUTH_DEG.to_radians(), ELEVATION_DEG.to_radians());
    let project = |x: f64, y: f64, z: f64| {
        (
            az.cos() * x - az.sin() * y,
            el.sin() * (az.sin() * x + az.cos() * y) + el.cos() * z,
        )
    };
    let (u, v): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| project(scaled[0][k], scaled[1][k], scaled[2][k]))
        .unzip();
    // Fixed extent so the unit cube always fits.
    let r = 1.0 + az.sin().abs().max(az.cos().abs());
    let frame = Frame::new((-r * 1.05, r * 1.05), (-r * 1.05, r * 1.05)).bare();
    let mut svg = frame.open(title, "", "");
    for (i, label) in labels.iter().enumerate() {
        let mut end = [-1.0; 3];
        end[i] = 1.0;
        let (ox, oy) = project(-1.0, -1.0, -1.0);
        let (ex, ey) = project(end[0], end[1], end[2]);
        svg.push_str(&frame.polyline(&[ox, ex], &[oy, ey], "#999999"));
        let (px, py) = frame.to_px(ex, ey);
        let _ = writeln!(
            svg,
            r##"<text x="{px:.3}" y="{py:.3}" font-size="12" fill="#555555">{}</text>"##,
            escape(label)
        );
    }
    svg.push_str(&frame.polyline(&u, &v, PALETTE[0]));
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Standard plot set for a component series: time plot, every pair, and the
/// axonometric view when there are at least three components.
pub fn component_plots(series: &ComponentSeries) -> Result<Vec<(String, String)>> {
    let table = NamedTable {
        columns: (1..=series.dim()).map(|j| format!("pi{j}")).collect(),
        times: series.times().to_vec(),
        values: series.values().clone(),
    };
    let mut out = vec![(
        "components_time.svg".to_string(),
        render_plot(&table, &PlotSpec::Time { columns: vec![] }, "principal components")?,
    )];
    let d = series.dim().min(3);
    for a in 1..=d {
        for b in a + 1..=d {
            let spec = PlotSpec::Pair {
                x: format!("pi{a}"),
                y: format!("pi{b}"),
            };
            out.push((format!("pi{a}_pi{b}.svg"), render_plot(&table, &spec, &format!("pi{a} vs pi{b}"))?));
        }
    }
    if d == 3 {
        let spec = PlotSpec::Axonometric {
            x: "pi1".into(),
            y: "pi2".into(),
            z: "pi3".into(),
        };
        out.push(("pi_3d.svg".to_string(), render_plot(&table, &spec, "pi1, pi2, pi3")?));
    }
    Ok(out)
}

/// Time plot of every column of a state matrix, named `<prefix>1..`.
pub fn matrix_time_plot(times: &[f64], values: &Matrix, prefix: &str, title: &str) -> Result<String> {
    let lines: Vec<(String, Vec<f64>)> = (0..values.cols())
        .map(|j| (format!("{prefix}{}", j + 1), values.col(j)))
        .collect();
    time_plot(times, &lines, title)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        let pad = lo.abs().max(1.0) * 0.5;
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn legend(svg: &mut String, i: usize, name: &str) {
    let y = MARGIN_TOP + 14.0 + 16.0 * i as f64;
    let x = WIDTH - MARGIN_RIGHT - 90.0;
    let _ = writeln!(
        svg,
        r#"<line x1="{x:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{}" stroke-width="2"/>"#,
        y - 4.0,
        x + 20.0,
        y - 4.0,
        PALETTE[i % PALETTE.len()]
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.3}" y="{y:.3}" font-size="12">{}</text>"#,
        x + 25.0,
        escape(name)
    );
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    axes: bool,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { x, y, axes: true }
    }

    fn bare(mut self) -> Self {
        self.axes = false;
        self
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        (
            MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * pw,
            MARGIN_TOP + (1.0 - (y - self.y.0) / (self.y.1 - self.y.0)) * ph,
        )
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.3}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        if !self.axes {
            return s;
        }
        let (x0, y0) = self.to_px(self.x.0, self.y.0);
        let (x1, y1) = self.to_px(self.x.1, self.y.1);
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.3}" y="{y1:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (px, _) = self.to_px(xv, self.y.0);
            let (_, py) = self.to_px(self.x.0, yv);
            let _ = writeln!(
                s,
                r#"<text x="{px:.3}" y="{:.3}" font-size="11" text-anchor="middle">{}</text>"#,
                y0 + 16.0,
                tick_label(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                py + 4.0,
                tick_label(yv)
            );
        }
        if !xlabel.is_empty() {
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" font-size="13" text-anchor="middle">{}</text>"#,
                (x0 + x1) / 2.0,
                HEIGHT - 10.0,
                escape(xlabel)
            );
        }
        if !ylabel.is_empty() {
            let (cx, cy) = (16.0, (y0 + y1) / 2.0);
            let _ = writeln!(
                s,
                r#"<text x="{cx:.3}" y="{cy:.3}" font-size="13" text-anchor="middle" transform="rotate(-90 {cx:.3} {cy:.3})">{}</text>"#,
                escape(ylabel)
            );
        }
        s
    }

    fn polyline(&self, x: &[f64], y: &[f64], color: &str) -> String {
        let mut pts = String::with_capacity(x.len() * 18);
        for (i, (a, b)) in x.iter().zip(y).enumerate() {
            let (px, py) = self.to_px(*a, *b);
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{px:.3},{py:.3}");
        }
        format!(
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n"
        )
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[f64; 4]]) -> NamedTable {
        NamedTable {
            columns: vec!["pi1".into(), "pi2".into(), "pi3".into()],
            times: rows.iter().map(|r| r[0]).collect(),
            values: Matrix::from_fn(rows.len(), 3, |i, j| rows[i][j + 1]),
        }
    }

    fn polylines(svg: &str) -> Vec<usize> {
        svg.match_indices("<polyline points=\"")
            .map(|(i, m)| {
                let rest = &svg[i + m.len()..];
                rest[..rest.find('"').unwrap()].split(' ').count()
            })
            .collect()
    }

    #[test]
    fn two_points_make_one_segment() {
        let t = table(&[[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 0.0, 1.0]]);
        let svg = render_plot(&t, &PlotSpec::Pair { x: "pi1".into(), y: "pi2".into() }, "p").unwrap();
        assert_eq!(polylines(&svg), vec![2]);
    }

    #[test]
    fn unknown_column_and_empty_series() {
        let t = table(&[[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 0.0, 1.0]]);
        let err = render_plot(&t, &PlotSpec::Pair { x: "pi1".into(), y: "pi9".into() }, "p").unwrap_err();
        assert!(err.to_string().contains("pi9"));
        let empty = NamedTable {
            columns: vec!["pi1".into()],
            times: vec![],
            values: Matrix::zeros(0, 1),
        };
        assert!(render_plot(&empty, &PlotSpec::Time { columns: vec![] }, "e").is_err());
    }

    #[test]
    fn deterministic_and_escaped() {
        let t = table(&[[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 0.0, 1.0], [2.0, 0.5, 1.0, -1.0]]);
        let spec = PlotSpec::Axonometric { x: "pi1".into(), y: "pi2".into(), z: "pi3".into() };
        let a = render_plot(&t, &spec, "a<b & c").unwrap();
        assert_eq!(a, render_plot(&t, &spec, "a<b & c").unwrap());
        assert!(a.contains("a&lt;b &amp; c"));
        assert_eq!(polylines(&a).last(), Some(&3));
    }

    #[test]
    fn time_plot_draws_each_column() {
        let t = table(&[[0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 0.0, 1.0], [2.0, 0.5, 1.0, -1.0]]);
        let svg = render_plot(&t, &PlotSpec::Time { columns: vec![] }, "t").unwrap();
        assert_eq!(polylines(&svg), vec![3, 3, 3]);
        let svg = render_plot(&t, &PlotSpec::Time { columns: vec!["pi2".into()] }, "t").unwrap();
        assert_eq!(polylines(&svg), vec![3]);
    }

    #[test]
    fn constant_series_still_renders() {
        let svg = pair_plot(&[1.0, 1.0], &[2.0, 2.0], "x", "y", "flat").unwrap();
        assert!(!svg.contains("NaN"));
    }
}
