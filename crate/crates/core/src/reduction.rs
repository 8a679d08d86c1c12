//! Whitening and PCA of lifted data, exported as the affine map `P(z) = Qz − q`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lifting::LiftedSeries;
use crate::linalg::{dot, thin_svd, Matrix};
use crate::series::{format_table, read_table, write_atomic};
use crate::{Error, Result};

/// Relative threshold below which a feature is treated as constant.
pub const STD_EPS: f64 = 1e-12;

/// Number of slowest observer time constants discarded before fitting.
pub const TRIM_TIME_CONSTANTS: f64 = 5.0;

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenModel {
    pub means: Vec<f64>,
    /// Sample standard deviations (`N − 1` denominator).
    pub stds: Vec<f64>,
    /// Indices of retained features, ascending.
    pub retained: Vec<usize>,
    /// Indices of dropped near-constant features, ascending.
    pub dropped: Vec<usize>,
    pub n_features: usize,
}

impl WhitenModel {
    /// Whitened copy of `z` restricted to retained features.
    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.n_features {
            return Err(Error::validation(format!(
                "data has {} features, whitening model expects {}",
                z.cols(),
                self.n_features
            )));
        }
        Ok(Matrix::from_fn(z.rows(), self.retained.len(), |i, j| {
            let f = self.retained[j];
            (z[(i, f)] - self.means[f]) / self.stds[f]
        }))
    }
}

/// Compute means and sample standard deviations; drop near-constant features.
pub fn fit_whiten(z: &Matrix) -> Result<WhitenModel> {
    let (n, d) = z.shape();
    if n < 2 {
        return Err(Error::validation(format!(
            "whitening needs at least 2 samples, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::validation("data has no features"));
    }
    let mut means = vec![0.0; d];
    for row in z.row_iter() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in z.row_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds: Vec<f64> = var.iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();

    let (retained, dropped): (Vec<usize>, Vec<usize>) =
        (0..d).partition(|&j| stds[j] >= STD_EPS * means[j].abs().max(1.0));
    if !dropped.is_empty() {
        log::warn!(
            "dropping {} near-constant feature(s) of {d}: {:?}",
            dropped.len(),
            &dropped[..dropped.len().min(10)]
        );
    }
    if retained.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {d} features are constant over the fitting window"
        )));
    }
    Ok(WhitenModel {
        means,
        stds,
        retained,
        dropped,
        n_features: d,
    })
}

/// Fitted PCA reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub whiten: WhitenModel,
    /// Target dimension `n`.
    pub dim: usize,
    /// Top-`n` eigenvalues of the whitened covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// All eigenvalues of the whitened covariance, descending.
    pub spectrum: Vec<f64>,
    /// Cumulative explained-variance ratio of the top `n` components.
    pub explained_ratio: f64,
    /// Per-component explained-variance ratios.
    pub component_ratios: Vec<f64>,
    /// `Ũ`, shape `retained × n`.
    pub basis: Matrix,
    /// `Q`, shape `n × n_z`; zero columns for dropped features.
    pub q_matrix: Matrix,
    /// `q = Q z̄`.
    pub offset: Vec<f64>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.whiten.n_features
    }
}

/// Principal components of whitened `z`, keeping `n` of them.
pub fn fit_pca(z: &Matrix, whiten: &WhitenModel, n: usize) -> Result<PcaModel> {
    let samples = z.rows();
    let retained = whiten.retained.len();
    if n == 0 || n > retained || n + 1 > samples {
        return Err(Error::validation(format!(
            "target dimension {n} must be in 1..=min(N−1, retained) = {}",
            (samples.saturating_sub(1)).min(retained)
        )));
    }
    let zw = whiten.apply(z)?;
    let svd = thin_svd(&zw)?;
    let denom = (samples - 1) as f64;
    let spectrum: Vec<f64> = svd.singular_values.iter().map(|s| s * s / denom).collect();
    let eigenvalues = spectrum[..n].to_vec();
    let component_ratios: Vec<f64> = eigenvalues.iter().map(|l| l / retained as f64).collect();
    let explained_ratio = component_ratios.iter().sum();

    let basis = Matrix::from_fn(retained, n, |i, k| svd.v[(i, k)]);
    let mut q_matrix = Matrix::zeros(n, whiten.n_features);
    for k in 0..n {
        for (i, &f) in whiten.retained.iter().enumerate() {
            q_matrix.row_mut(k)[f] = basis[(i, k)] / whiten.stds[f];
        }
    }
    let offset = q_matrix.matvec(&whiten.means)?;
    Ok(PcaModel {
        whiten: whiten.clone(),
        dim: n,
        eigenvalues,
        spectrum,
        explained_ratio,
        component_ratios,
        basis,
        q_matrix,
        offset,
    })
}

/// `P(z) = Qz − q`.
pub fn project(model: &PcaModel, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != model.n_features() {
        return Err(Error::validation(format!(
            "vector has length {}, model expects {}",
            z.len(),
            model.n_features()
        )));
    }
    Ok(model
        .q_matrix
        .row_iter()
        .zip(&model.offset)
        .map(|(row, q)| dot(row, z) - q)
        .collect())
}

/// Principal-component coordinates over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSeries {
    times: Vec<f64>,
    values: Matrix,
    in_fit: Vec<bool>,
}

impl ComponentSeries {
    pub fn new(times: Vec<f64>, values: Matrix, in_fit: Vec<bool>) -> Result<Self> {
        crate::series::check_times(&times, values.rows())?;
        if in_fit.len() != times.len() {
            return Err(Error::validation("fit mask length differs from sample count"));
        }
        if !values.is_finite() {
            return Err(Error::Numerical("non-finite principal components".into()));
        }
        Ok(Self {
            times,
            values,
            in_fit,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `Π`, shape `N × n`.
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Whether each sample was part of the fitting window.
    pub fn in_fit(&self) -> &[bool] {
        &self.in_fit
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t)
    }

    /// Samples `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> ComponentSeries {
        ComponentSeries {
            times: self.times[start..end].to_vec(),
            values: self.values.select_rows(start, end),
            in_fit: self.in_fit[start..end].to_vec(),
        }
    }

    pub fn to_csv(&self) -> String {
        format_table("pi", &self.times, &self.values)
    }

    /// Write as `t,pi1,...,pin`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    /// Read a component table; the fit mask is not stored and comes back all `true`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (times, values) = read_table(path, "pi")?;
        let mask = vec![true; times.len()];
        Self::new(times, values, mask)
    }
}

/// Options for [`reduce_series`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceOptions {
    /// Target dimension `n`.
    pub dim: usize,
    /// Transient length; `None` uses `5 / a_min`.
    pub trim: Option<f64>,
    /// Fraction of the post-transient samples (a leading prefix) used for fitting.
    pub fit_fraction: f64,
}

impl ReduceOptions {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            trim: None,
            fit_fraction: 1.0,
        }
    }
}

/// Fitted model plus the bookkeeping needed to reproduce the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    #[serde(flatten)]
    pub model: PcaModel,
    /// Transient length discarded before fitting.
    pub trim: f64,
    /// Fitting window as sample indices `[start, end)`.
    pub fit_window: [usize; 2],
    /// Fitting window in time.
    pub fit_span: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observer_seed: Option<u64>,
}

impl PcaReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trim the transient, fit on the post-transient window and project every sample.
pub fn reduce_series(
    lifted: &LiftedSeries,
    options: &ReduceOptions,
) -> Result<(PcaReport, ComponentSeries)> {
    let trim = options
        .trim
        .unwrap_or(TRIM_TIME_CONSTANTS / lifted.min_rate());
    if !(trim >= 0.0 && trim.is_finite()) {
        return Err(Error::validation(format!("transient trim must be non-negative, got {trim}")));
    }
    if !(options.fit_fraction > 0.0 && options.fit_fraction <= 1.0) {
        return Err(Error::validation(format!(
            "fit fraction must be in (0, 1], got {}",
            options.fit_fraction
        )));
    }
    let times = lifted.times();
    let t_cut = times[0] + trim;
    let start = times.partition_point(|&t| t < t_cut);
    let available = times.len() - start;
    let count = ((available as f64 * options.fit_fraction).round() as usize).min(available);
    if count < options.dim + 1 {
        return Err(Error::validation(format!(
            "{count} samples in the fitting window; need at least {}",
            options.dim + 1
        )));
    }
    let end = start + count;
    let fit_data = lifted.states().select_rows(start, end);
    let whiten = fit_whiten(&fit_data)?;
    let model = fit_pca(&fit_data, &whiten, options.dim)?;

    let z = lifted.states();
    let mut values = Matrix::zeros(z.rows(), options.dim);
    for (k, row) in z.row_iter().enumerate() {
        values.row_mut(k).copy_from_slice(&project(&model, row)?);
    }
    let in_fit = (0..z.rows()).map(|k| (start..end).contains(&k)).collect();
    let series = ComponentSeries::new(times.to_vec(), values, in_fit)?;
    let report = PcaReport {
        model,
        trim,
        fit_window: [start, end],
        fit_span: [times[start], times[end - 1]],
        observer_seed: None,
    };
    Ok((report, series))
}
