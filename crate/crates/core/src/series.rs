//! Time-stamped matrices and their CSV form.
//!
//! Every series in the crate (states, outputs, observer states, principal
//! components) is written as `t,<prefix>1,...,<prefix>k` with one row per
//! sample. Floats use Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces the values bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Relative tolerance on sample spacing for a series to count as uniform.
pub const UNIFORM_TOL: f64 = 1e-6;

/// How the columns of an output vector map back to pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Layout {
    /// No structure known.
    Generic,
    /// `3·w·h` entries: all red values row-major, then green, then blue.
    Planar { width: usize, height: usize },
}

/// Sampled measurements `y(t_k)`, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSeries {
    times: Vec<f64>,
    values: Matrix,
    layout: Layout,
}

impl OutputSeries {
    pub fn new(times: Vec<f64>, values: Matrix) -> Result<Self> {
        check_times(&times, values.rows())?;
        Ok(Self {
            times,
            values,
            layout: Layout::Generic,
        })
    }

    pub fn with_layout(mut self, layout: Layout) -> Result<Self> {
        if let Layout::Planar { width, height } = layout {
            if 3 * width * height != self.dim() {
                return Err(Error::validation(format!(
                    "planar layout {width}x{height} needs {} columns, series has {}",
                    3 * width * height,
                    self.dim()
                )));
            }
        }
        self.layout = layout;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Output dimension `p`.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Sampling interval, or a validation error if the grid is not uniform.
    pub fn interval(&self) -> Result<f64> {
        uniform_interval(&self.times)
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> OutputSeries {
        OutputSeries {
            times: self.times[start..end].to_vec(),
            values: self.values.select_rows(start, end),
            layout: self.layout,
        }
    }
}

pub(crate) fn check_times(times: &[f64], rows: usize) -> Result<()> {
    if times.len() != rows {
        return Err(Error::validation(format!(
            "{} timestamps for {rows} samples",
            times.len()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("non-finite timestamp"));
    }
    if let Some(k) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::validation(format!(
            "timestamps not strictly increasing at sample {}",
            k + 1
        )));
    }
    Ok(())
}

/// Common spacing of `times`, checked to [`UNIFORM_TOL`] relative.
pub fn uniform_interval(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::validation("need at least two samples for a sampling interval"));
    }
    let n = times.len();
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    for (k, &t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * h;
        if (t - expected).abs() > UNIFORM_TOL * h {
            return Err(Error::validation(format!(
                "timestamps are not uniform: sample {k} at {t}, expected {expected}"
            )));
        }
    }
    Ok(h)
}

/// Render `t,<prefix>1..` CSV text.
pub fn format_table(prefix: &str, times: &[f64], values: &Matrix) -> String {
    let mut out = String::with_capacity(values.rows() * (values.cols() + 1) * 20);
    out.push('t');
    for j in 1..=values.cols() {
        let _ = write!(out, ",{prefix}{j}");
    }
    out.push('\n');
    for (t, row) in times.iter().zip(values.row_iter()) {
        let _ = write!(out, "{t}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// A CSV table with arbitrary column names after `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTable {
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub values: Matrix,
}

impl NamedTable {
    /// Position of a named column among the value columns.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Parse CSV text written by [`format_table`].
///
/// `source` names the input in error messages.
pub fn parse_table(text: &str, source: &str, prefix: &str) -> Result<(Vec<f64>, Matrix)> {
    let table = parse_named_table(text, source)?;
    for (j, name) in table.columns.iter().enumerate() {
        if *name != format!("{prefix}{}", j + 1) {
            return Err(Error::parse(
                source,
                "line 1",
                format!("column {} is `{name}`, expected `{prefix}{}`", j + 2, j + 1),
            ));
        }
    }
    Ok((table.times, table.values))
}

/// Parse a `t,<name>,...` CSV table without constraining the column names.
pub fn parse_named_table(text: &str, source: &str) -> Result<NamedTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(source, "line 1", "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") {
        return Err(Error::parse(source, "line 1", "first column must be `t`"));
    }
    let width = cols.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width + 1 {
            return Err(Error::parse(
                source,
                format!("line {lineno}"),
                format!("expected {} fields, found {}", width + 1, fields.len()),
            ));
        }
        let mut parsed = fields.iter().map(|f| {
            f.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::parse(source, format!("line {lineno}"), format!("bad number `{f}`"))
            })
        });
        let t = parsed.next().unwrap()?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::parse(
                    source,
                    format!("line {lineno}"),
                    format!("time {t} does not increase (previous {prev})"),
                ));
            }
        }
        times.push(t);
        for v in parsed {
            data.push(v?);
        }
    }
    if times.is_empty() {
        return Err(Error::parse(source, "line 2", "no data rows"));
    }
    let values = Matrix::new(times.len(), width, data)?;
    Ok(NamedTable {
        columns: cols[1..].iter().map(|c| c.to_string()).collect(),
        times,
        values,
    })
}

pub(crate) fn read_table(path: &Path, prefix: &str) -> Result<(Vec<f64>, Matrix)> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, &path.display().to_string(), prefix)
}

/// Write `bytes` to a temporary sibling and rename it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Write an output series as `t,y1,...,yp`.
pub fn write_csv_series(series: &OutputSeries, path: &Path) -> Result<()> {
    write_atomic(path, format_table("y", &series.times, &series.values).as_bytes())
}

/// Read a `t,y1,...,yp` file. The layout comes back as [`Layout::Generic`].
pub fn read_csv_series(path: &Path) -> Result<OutputSeries> {
    let (times, values) = read_table(path, "y")?;
    OutputSeries::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_written_file() {
        let text = "t,y1,y2\n0,1.5,-2\n0.5,3,4e-3\n";
        let (t, m) = parse_table(text, "mem", "y").unwrap();
        assert_eq!(t, vec![0.0, 0.5]);
        assert_eq!(m, Matrix::from_rows(&[[1.5, -2.0], [3.0, 4e-3]]));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_table("", "mem", "y"), Err(Error::Parse { .. })));
        assert!(matches!(parse_table("t,y1\n", "mem", "y"), Err(Error::Parse { .. })));
    }

    #[test]
    fn ragged_and_non_monotone_rows_report_line() {
        let err = parse_table("t,y1,y2\n0,1,2\n1,3\n", "f.csv", "y").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_table("t,y1\n0,1\n1,2\n1,3\n", "f.csv", "y").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn header_is_checked() {
        assert!(parse_table("t,y2\n0,1\n", "mem", "y").is_err());
        assert!(parse_table("time,y1\n0,1\n", "mem", "y").is_err());
    }

    #[test]
    fn uniform_interval_detects_jitter() {
        assert!((uniform_interval(&[0.0, 0.075, 0.15]).unwrap() - 0.075).abs() < 1e-15);
        assert!(uniform_interval(&[0.0, 0.1, 0.25]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let s = OutputSeries::new(
            vec![0.0, 0.075, 0.15],
            Matrix::from_rows(&[[0.1, 1.0 / 3.0], [1e-300, -7.0], [2.5, 9e12]]),
        )
        .unwrap();
        write_csv_series(&s, &path).unwrap();
        assert_eq!(read_csv_series(&path).unwrap(), s);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20),
            start in -10.0f64..10.0,
        ) {
            let times: Vec<f64> = (0..rows.len()).map(|k| start + 0.075 * k as f64).collect();
            let m = Matrix::from_rows(&rows);
            let text = format_table("y", &times, &m);
            let (t2, m2) = parse_table(&text, "mem", "y").unwrap();
            prop_assert_eq!(t2, times);
            prop_assert_eq!(m2, m);
        }
    }
}
