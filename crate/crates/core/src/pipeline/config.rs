use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{IntegratorConfig, OregonatorParams};
use crate::ingest::{ColorMap, Roi};
use crate::{Error, Result};

/// Environment variable consulted for the output directory when neither the
/// command line nor the config names one.
pub const OUTPUT_DIR_ENV: &str = "KKL_OUTPUT_DIR";

/// Output directory used when nothing else is set.
pub const DEFAULT_OUTPUT_DIR: &str = "kkl-out";

/// Full description of a pipeline run, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    #[serde(default)]
    pub observer: ObserverSpec,
    /// Number of principal components kept (the plant order `n`).
    #[serde(default = "default_target_dim")]
    pub target_dim: usize,
    /// Transient discarded before fitting; defaults to five slowest time constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_trim: Option<f64>,
    /// Leading fraction of the post-transient samples used for fitting.
    #[serde(default = "one")]
    pub fit_fraction: f64,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Emit SVG plots.
    #[serde(default = "yes")]
    pub plots: bool,
    /// Persist truth, outputs, lifted states and frames besides the final artifacts.
    #[serde(default = "yes")]
    pub write_intermediates: bool,
}

/// Where the output signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Simulated Oregonator measured through a synthetic output map.
    OregonatorSynthetic {
        #[serde(default)]
        params: OregonatorParams,
        #[serde(default = "default_x0")]
        x0: [f64; 3],
        /// Length of the recorded window.
        #[serde(default = "default_horizon")]
        horizon: f64,
        /// Simulated time discarded before recording starts.
        #[serde(default)]
        warmup: f64,
        #[serde(default = "default_interval")]
        sampling_interval: f64,
        #[serde(default)]
        integrator: IntegratorConfig,
        output_map: OutputMapConfig,
    },
    /// Output series from a `t,y1,...` CSV file.
    Csv {
        path: PathBuf,
        /// Optional ground truth `t,x1,...` on the same grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<PathBuf>,
    },
    /// Binary PPM frames, a directory or a pattern with one `*`.
    PpmSequence {
        path: PathBuf,
        #[serde(default = "default_interval")]
        frame_interval: f64,
        /// Defaults to the whole frame.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        roi: Option<Roi>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<PathBuf>,
    },
}

/// Measurement map applied to the simulated states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutputMapConfig {
    /// `p` random tanh features of the standardized state.
    RandomSmooth { dim: usize, seed: u64 },
    /// `y = x`.
    PassThrough,
    /// Uniform-color frames with pixel noise, read back through a full-frame ROI.
    RenderedFrames {
        width: usize,
        height: usize,
        #[serde(default)]
        noise: f64,
        seed: u64,
        #[serde(default)]
        color_map: ColorMap,
    },
}

/// Random observer: rates uniform on `[rate_min, rate_max]`, order `p(n+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    #[serde(default = "default_rate_min")]
    pub rate_min: f64,
    #[serde(default = "default_rate_max")]
    pub rate_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Plant order used to size the observer; defaults to `target_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_dim: Option<usize>,
    /// Explicit observer order, overriding `p(n+1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

impl Default for ObserverSpec {
    fn default() -> Self {
        Self {
            rate_min: default_rate_min(),
            rate_max: default_rate_max(),
            seed: 0,
            state_dim: None,
            order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub align: bool,
    #[serde(default = "yes")]
    pub period: bool,
    #[serde(default = "yes")]
    pub recurrence: bool,
    /// Largest per-dimension normalized RMSE that counts as recovery.
    #[serde(default = "default_threshold")]
    pub nrmse_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            align: true,
            period: true,
            recurrence: true,
            nrmse_threshold: default_threshold(),
        }
    }
}

fn default_target_dim() -> usize {
    3
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_x0() -> [f64; 3] {
    [0.5, 0.5, 0.5]
}
fn default_horizon() -> f64 {
    34.0
}
fn default_interval() -> f64 {
    0.075
}
fn default_rate_min() -> f64 {
    1.0
}
fn default_rate_max() -> f64 {
    50.0
}
fn default_threshold() -> f64 {
    0.15
}

impl PipelineConfig {
    /// Oregonator with `p` random-smooth outputs and default observer settings.
    pub fn synthetic(p: usize, output_seed: u64, observer_seed: u64) -> Self {
        Self {
            source: SourceConfig::OregonatorSynthetic {
                params: OregonatorParams::default(),
                x0: default_x0(),
                horizon: default_horizon(),
                warmup: 0.0,
                sampling_interval: default_interval(),
                integrator: IntegratorConfig::default(),
                output_map: OutputMapConfig::RandomSmooth {
                    dim: p,
                    seed: output_seed,
                },
            },
            observer: ObserverSpec {
                seed: observer_seed,
                ..Default::default()
            },
            target_dim: default_target_dim(),
            transient_trim: None,
            fit_fraction: 1.0,
            diagnostics: DiagnosticsConfig::default(),
            output_dir: None,
            plots: true,
            write_intermediates: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            Error::parse("config", format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { location, message, .. } => Error::Parse {
                path: path.display().to_string(),
                location,
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn sha256(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    /// Plant order used to size the observer.
    pub fn state_dim(&self) -> usize {
        self.observer.state_dim.unwrap_or(self.target_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.target_dim == 0 {
            return bad("target_dim must be at least 1".into());
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return bad(format!("fit_fraction must be in (0, 1], got {}", self.fit_fraction));
        }
        if let Some(t) = self.transient_trim {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("transient_trim must be non-negative, got {t}"));
            }
        }
        let o = &self.observer;
        if !(o.rate_min > 0.0 && o.rate_min < o.rate_max && o.rate_max.is_finite()) {
            return bad(format!(
                "observer rates need 0 < rate_min < rate_max, got [{}, {}]",
                o.rate_min, o.rate_max
            ));
        }
        if o.state_dim == Some(0) || o.order == Some(0) {
            return bad("observer state_dim and order must be positive".into());
        }
        if !(self.diagnostics.nrmse_threshold > 0.0) {
            return bad("nrmse_threshold must be positive".into());
        }
        match &self.source {
            SourceConfig::OregonatorSynthetic {
                params,
                horizon,
                warmup,
                sampling_interval,
                integrator,
                output_map,
                x0,
            } => {
                params.validate()?;
                integrator.validate()?;
                if x0.iter().any(|v| !v.is_finite()) {
                    return bad("x0 must be finite".into());
                }
                if !(*horizon > 0.0 && horizon.is_finite()) {
                    return bad(format!("horizon must be positive, got {horizon}"));
                }
                if !(*warmup >= 0.0 && warmup.is_finite()) {
                    return bad(format!("warmup must be non-negative, got {warmup}"));
                }
                if !(*sampling_interval > 0.0 && *sampling_interval <= *horizon) {
                    return bad(format!(
                        "sampling_interval must be in (0, horizon], got {sampling_interval}"
                    ));
                }
                match output_map {
                    OutputMapConfig::RandomSmooth { dim: 0, .. } => {
                        return bad("output dim must be at least 1".into())
                    }
                    OutputMapConfig::RenderedFrames { width, height, noise, .. } => {
                        if *width == 0 || *height == 0 {
                            return bad("frame width and height must be positive".into());
                        }
                        if !(*noise >= 0.0 && noise.is_finite()) {
                            return bad(format!("noise must be non-negative, got {noise}"));
                        }
                    }
                    _ => {}
                }
            }
            SourceConfig::Csv { .. } => {}
            SourceConfig::PpmSequence { frame_interval, .. } => {
                if !(*frame_interval > 0.0 && frame_interval.is_finite()) {
                    return bad(format!("frame_interval must be positive, got {frame_interval}"));
                }
            }
        }
        Ok(())
    }
}

/// Output directory: command line, then config, then environment, then default.
pub fn resolve_output_dir(cli: Option<&Path>, config: Option<&PipelineConfig>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = config.and_then(|c| c.output_dir.as_ref()) {
        return p.clone();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUTPUT_DIR),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_fills_defaults() {
        let cfg = PipelineConfig::from_json(
            r#"{"source": {"kind": "oregonator-synthetic", "output_map": {"kind": "random-smooth", "dim": 50, "seed": 1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.target_dim, 3);
        assert_eq!(cfg.observer.rate_min, 1.0);
        assert_eq!(cfg.observer.rate_max, 50.0);
        assert_eq!(cfg.diagnostics.nrmse_threshold, 0.15);
        assert_eq!(cfg, PipelineConfig::synthetic(50, 1, 0));
    }

    #[test]
    fn json_round_trip_and_hash() {
        let cfg = PipelineConfig::synthetic(10, 2, 3);
        let back = PipelineConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.sha256().unwrap(), cfg.sha256().unwrap());
        assert_ne!(PipelineConfig::synthetic(10, 2, 4).sha256().unwrap(), cfg.sha256().unwrap());
    }

    #[test]
    fn unknown_fields_and_bad_values() {
        let e = PipelineConfig::from_json(r#"{"source": {"kind": "csv", "path": "y.csv"}, "bogus": 1}"#);
        assert!(matches!(e, Err(Error::Parse { .. })));
        let mut cfg = PipelineConfig::synthetic(5, 0, 0);
        cfg.fit_fraction = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::synthetic(5, 0, 0);
        if let SourceConfig::OregonatorSynthetic { horizon, .. } = &mut cfg.source {
            *horizon = 0.0;
        }
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = PipelineConfig::synthetic(5, 0, 0);
        cfg.output_dir = Some("from-config".into());
        assert_eq!(resolve_output_dir(Some(Path::new("cli")), Some(&cfg)), PathBuf::from("cli"));
        assert_eq!(resolve_output_dir(None, Some(&cfg)), PathBuf::from("from-config"));
    }
}
