//! Recovery-quality measures: affine alignment of components to true states,
//! autocorrelation period, limit-cycle recurrence and the summary report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{interpolate_rows, Trajectory};
use crate::lifting::DecayFit;
use crate::linalg::{norm2, solve_linear, Matrix};
use crate::reduction::ComponentSeries;
use crate::series::write_atomic;
use crate::{Error, Result};

/// Version of the report JSON layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Minimum autocorrelation for a peak to count as a period.
pub const PEAK_THRESHOLD: f64 = 0.2;

/// Default lag search range as fractions of the series span.
pub const DEFAULT_LAG_RANGE: (f64, f64) = (0.1, 0.5);

/// Least-squares affine map from components to true states, `x ≈ W π + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineAlignment {
    /// `W`, shape `n_truth × n_pcs`.
    pub weights: Matrix,
    pub offset: Vec<f64>,
    /// Coefficient of determination per truth dimension.
    pub r_squared: Vec<f64>,
    /// RMSE per truth dimension divided by that dimension's range.
    pub nrmse: Vec<f64>,
}

impl AffineAlignment {
    pub fn min_r_squared(&self) -> f64 {
        self.r_squared.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_nrmse(&self) -> f64 {
        self.nrmse.iter().cloned().fold(0.0, f64::max)
    }
}

/// Align components to a trajectory sampled on the same grid.
pub fn align_affine(pcs: &ComponentSeries, truth: &Trajectory) -> Result<AffineAlignment> {
    if pcs.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} component samples vs {} truth samples; resample onto a shared grid first",
            pcs.len(),
            truth.len()
        )));
    }
    for (a, b) in pcs.times().iter().zip(truth.times()) {
        if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
            return Err(Error::validation(format!(
                "time grids differ ({a} vs {b}); resample onto a shared grid first"
            )));
        }
    }
    align_matrices(pcs.values(), truth.states())
}

/// Regress each column of `truth` on the columns of `pcs` plus an intercept.
pub fn align_matrices(pcs: &Matrix, truth: &Matrix) -> Result<AffineAlignment> {
    let (n, k) = pcs.shape();
    if truth.rows() != n {
        return Err(Error::validation("regressor and target row counts differ"));
    }
    if n < k + 2 {
        return Err(Error::validation(format!(
            "{n} samples are too few to fit {k} components with intercept"
        )));
    }
    let stats = |m: &Matrix, j: usize| {
        let col = m.col(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        (mean, ss)
    };
    let mut means = vec![0.0; k];
    let mut scales = vec![0.0; k];
    for j in 0..k {
        let (m, ss) = stats(pcs, j);
        let s = (ss / n as f64).sqrt();
        if !(s > 1e-12 * m.abs().max(1.0)) {
            return Err(Error::Degenerate(format!("component {} is constant", j + 1)));
        }
        means[j] = m;
        scales[j] = s;
    }
    let xs = Matrix::from_fn(n, k, |i, j| (pcs[(i, j)] - means[j]) / scales[j]);
    let gram = xs.gram();

    let d = truth.cols();
    let mut weights = Matrix::zeros(d, k);
    let mut offset = vec![0.0; d];
    let mut r_squared = vec![0.0; d];
    let mut nrmse = vec![0.0; d];
    for t in 0..d {
        let y = truth.col(t);
        let (ym, ss_tot) = stats(truth, t);
        if !(ss_tot > 0.0) {
            return Err(Error::Degenerate(format!("truth dimension {} is constant", t + 1)));
        }
        let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let rhs = xs.tr_matvec(&yc)?;
        let beta = solve_linear(&gram, &rhs).map_err(|e| match e {
            Error::Singular { condition } => Error::Degenerate(format!(
                "components are collinear (condition estimate {condition:.3e})"
            )),
            other => other,
        })?;
        let fitted = xs.matvec(&beta)?;
        let ss_res: f64 = yc.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut c = ym;
        for j in 0..k {
            let w = beta[j] / scales[j];
            weights[(t, j)] = w;
            c -= w * means[j];
        }
        offset[t] = c;
        r_squared[t] = 1.0 - ss_res / ss_tot;
        nrmse[t] = (ss_res / n as f64).sqrt() / (hi - lo);
    }
    Ok(AffineAlignment {
        weights,
        offset,
        r_squared,
        nrmse,
    })
}

/// Dominant period from the autocorrelation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Zero when not valid.
    pub period: f64,
    /// Autocorrelation at the discrete peak.
    pub peak: f64,
    pub valid: bool,
}

impl PeriodEstimate {
    fn invalid(peak: f64) -> Self {
        Self {
            period: 0.0,
            peak,
            valid: false,
        }
    }
}

/// Period of a uniformly sampled scalar series.
///
/// The lag range defaults to `[0.1, 0.5]` of the span.
pub fn estimate_period(
    series: &[f64],
    dt: f64,
    lag_range: Option<(f64, f64)>,
) -> Result<PeriodEstimate> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation(format!("sampling interval must be positive, got {dt}")));
    }
    let n = series.len();
    if n < 2 {
        return Err(Error::validation("period estimation needs at least 2 samples"));
    }
    let span = (n - 1) as f64 * dt;
    let (lo, hi) = lag_range.unwrap_or((DEFAULT_LAG_RANGE.0 * span, DEFAULT_LAG_RANGE.1 * span));
    let k_lo = ((lo / dt).ceil().max(1.0)) as usize;
    let k_hi = ((hi / dt).floor() as usize).min(n - 1);
    if k_hi < k_lo + 2 {
        return Err(Error::validation(format!(
            "lag range [{lo}, {hi}] holds fewer than 3 candidate lags"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if !(energy > 1e-24 * n as f64 * mean.abs().max(1.0).powi(2)) {
        return Ok(PeriodEstimate::invalid(0.0));
    }
    // Biased estimate: the (n − k)/n taper favours the first period over its multiples.
    // One extra lag on each side lets peaks on the range edges be tested as local maxima.
    let first = k_lo - 1;
    let last = (k_hi + 1).min(n - 1);
    let acf: Vec<f64> = (first..=last)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / energy)
        .collect();
    let mut best: Option<usize> = None;
    for i in 1..=(k_hi - first) {
        if i + 1 >= acf.len() {
            break;
        }
        if acf[i] > acf[i - 1] && acf[i] >= acf[i + 1] && best.is_none_or(|b| acf[i] > acf[b]) {
            best = Some(i);
        }
    }
    let Some(i) = best else {
        return Ok(PeriodEstimate::invalid(acf[1..].iter().cloned().fold(-1.0, f64::max)));
    };
    if acf[i] <= PEAK_THRESHOLD {
        return Ok(PeriodEstimate::invalid(acf[i]));
    }
    let (a, b, c) = (acf[i - 1], acf[i], acf[i + 1]);
    let curv = a - 2.0 * b + c;
    let shift = if curv < 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
    Ok(PeriodEstimate {
        period: ((first + i) as f64 + shift) * dt,
        peak: b,
        valid: true,
    })
}

/// Largest `‖s(t + T) − s(t)‖` over `t ≥ t_start`, relative to the
/// half-range vector of `s` on the same window.
pub fn recurrence_error(times: &[f64], values: &Matrix, period: f64, t_start: f64) -> Result<f64> {
    if times.len() != values.rows() || times.is_empty() {
        return Err(Error::validation("times and values disagree in length"));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::validation(format!("period must be positive, got {period}")));
    }
    let t_end = times[times.len() - 1];
    if t_end - t_start < 2.0 * period {
        return Err(Error::validation(format!(
            "window [{t_start}, {t_end}] is shorter than two periods of {period}"
        )));
    }
    let first = times.partition_point(|&t| t < t_start);
    let d = values.cols();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for k in first..times.len() {
        for (j, v) in values.row(k).iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let half: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let scale = norm2(&half);
    if !(scale > 0.0) {
        return Err(Error::Degenerate("series is constant over the window".into()));
    }
    let mut worst = 0.0f64;
    for k in first..times.len() {
        let t = times[k];
        if t + period > t_end {
            break;
        }
        let ahead = interpolate_rows(times, values, t + period);
        let diff: Vec<f64> = ahead.iter().zip(values.row(k)).map(|(a, b)| a - b).collect();
        worst = worst.max(norm2(&diff));
    }
    Ok(worst / scale)
}

/// Period comparison between the true states and the recovered components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodComparison {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PeriodEstimate>,
    pub recovered: PeriodEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
}

impl PeriodComparison {
    pub fn new(truth: Option<PeriodEstimate>, recovered: PeriodEstimate) -> Self {
        let relative_error = truth
            .filter(|t| t.valid && recovered.valid)
            .map(|t| (recovered.period - t.period).abs() / t.period);
        Self {
            truth,
            recovered,
            relative_error,
        }
    }
}

/// Aggregated diagnostics for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spectrum: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AffineAlignment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nrmse_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periods: Option<PeriodComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recurrence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayFit>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seeds: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

impl Default for Report {
    fn default() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            spectrum: Vec::new(),
            explained_ratio: None,
            alignment: None,
            recovered: None,
            nrmse_threshold: None,
            periods: None,
            recurrence: None,
            decay: None,
            seeds: BTreeMap::new(),
            config_sha256: None,
        }
    }
}

impl Report {
    /// Attach an alignment and judge it against an nRMSE threshold.
    pub fn with_alignment(mut self, alignment: AffineAlignment, threshold: f64) -> Self {
        self.recovered = Some(alignment.max_nrmse() <= threshold);
        self.nrmse_threshold = Some(threshold);
        self.alignment = Some(alignment);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn truth(n: usize) -> Matrix {
        Matrix::from_fn(n, 3, |i, j| {
            let t = i as f64 * 0.05;
            (t * (j + 1) as f64).sin() + 0.3 * (t * 0.7 + j as f64).cos()
        })
    }

    #[test]
    fn identity_alignment() {
        let x = truth(100);
        let a = align_matrices(&x, &x).unwrap();
        let eye = Matrix::identity(3);
        assert!(a.weights.sub(&eye).unwrap().max_abs() < 1e-10);
        for j in 0..3 {
            assert!(a.offset[j].abs() < 1e-10);
            assert!((a.r_squared[j] - 1.0).abs() < 1e-12);
            assert!(a.nrmse[j] < 1e-10);
        }
    }

    #[test]
    fn affine_inverse() {
        let x = truth(80);
        let p = x.map(|v| 2.0 * v + 1.0);
        let a = align_matrices(&p, &x).unwrap();
        assert!(a.weights.sub(&Matrix::identity(3).scale(0.5)).unwrap().max_abs() < 1e-10);
        for j in 0..3 {
            assert!((a.offset[j] + 0.5).abs() < 1e-10);
            assert!((a.r_squared[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_recovered_as_transpose() {
        let (c1, s1) = (0.3f64.cos(), 0.3f64.sin());
        let (c2, s2) = (1.1f64.cos(), 1.1f64.sin());
        let rz = Matrix::from_rows(&[[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]]);
        let rx = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, c2, -s2], [0.0, s2, c2]]);
        let r = rz.matmul(&rx).unwrap();
        let x = truth(120);
        let p = x.matmul_transpose(&r).unwrap();
        let a = align_matrices(&p, &x).unwrap();
        assert!(a.weights.sub(&r.transpose()).unwrap().max_abs() < 1e-8);
        assert!(a.min_r_squared() > 1.0 - 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let x = truth(50);
        let mut p = x.clone();
        for i in 0..50 {
            p.row_mut(i)[1] = 4.0;
        }
        assert!(matches!(align_matrices(&p, &x), Err(Error::Degenerate(_))));
        let mut q = x.clone();
        for i in 0..50 {
            q.row_mut(i)[2] = q[(i, 0)] * 2.0;
        }
        assert!(matches!(align_matrices(&q, &x), Err(Error::Degenerate(_))));
        let flat = Matrix::from_fn(50, 1, |_, _| 1.0);
        assert!(matches!(align_matrices(&x, &flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn alignment_requires_shared_grid() {
        let x = truth(20);
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let traj = Trajectory::new(t.clone(), x.clone()).unwrap();
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.5).collect();
        let pcs = ComponentSeries::new(shifted, x.clone(), vec![true; 20]).unwrap();
        assert!(align_affine(&pcs, &traj).is_err());
        let pcs = ComponentSeries::new(t, x, vec![true; 20]).unwrap();
        assert!(align_affine(&pcs, &traj).unwrap().min_r_squared() > 0.999);
    }

    #[test]
    fn sine_period() {
        let t0 = 2.5;
        let dt = t0 / 100.0;
        let s: Vec<f64> = (0..1000).map(|k| (2.0 * PI * k as f64 * dt / t0).sin()).collect();
        let p = estimate_period(&s, dt, None).unwrap();
        assert!(p.valid);
        assert!((p.period - t0).abs() / t0 < 0.01, "{p:?}");
    }

    #[test]
    fn constant_and_noise_are_invalid() {
        assert!(!estimate_period(&[3.0; 200], 0.1, None).unwrap().valid);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..2000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = estimate_period(&noise, 0.1, None).unwrap();
        assert!(!p.valid, "{p:?}");
        assert!(estimate_period(&[1.0, 2.0, 3.0], 0.1, None).is_err());
    }

    #[test]
    fn recurrence_of_periodic_and_damped() {
        let dt = 0.01;
        let times: Vec<f64> = (0..3000).map(|k| k as f64 * dt).collect();
        let per = Matrix::from_fn(3000, 2, |k, j| (times[k] + j as f64).sin());
        let e = recurrence_error(&times, &per, 2.0 * PI, 0.0).unwrap();
        assert!(e < 1e-4, "{e}");

        let gamma = 0.02;
        let damped = Matrix::from_fn(3000, 1, |k, _| (-gamma * times[k]).exp() * times[k].sin());
        let e = recurrence_error(&times, &damped, 2.0 * PI, 0.0).unwrap();
        let closed = 1.0 - (-gamma * 2.0 * PI).exp();
        assert!((e - closed).abs() / closed < 0.05, "{e} vs {closed}");
        assert!(recurrence_error(&times, &per, 20.0, 0.0).is_err());
    }

    #[test]
    fn report_round_trip_and_absent_fields() {
        let r = Report::default();
        let json = r.to_json().unwrap();
        assert!(!json.contains("alignment"));
        assert!(!json.contains("periods"));
        assert_eq!(Report::from_json(&json).unwrap(), r);

        let x = truth(40);
        let a = align_matrices(&x, &x).unwrap();
        let mut r = Report::default().with_alignment(a, 0.15);
        r.seeds.insert("observer".into(), 7);
        r.periods = Some(PeriodComparison::new(
            Some(PeriodEstimate { period: 2.0, peak: 0.9, valid: true }),
            PeriodEstimate { period: 2.1, peak: 0.8, valid: true },
        ));
        let back = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.recovered, Some(true));
        assert!((back.periods.unwrap().relative_error.unwrap() - 0.05).abs() < 1e-12);
    }
}
