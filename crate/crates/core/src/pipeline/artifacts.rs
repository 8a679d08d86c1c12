use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{run_pipeline, PipelineConfig, PipelineOutcome};
use crate::ingest::{channel_means, encode_ppm};
use crate::plot::{axonometric_plot, component_plots, matrix_time_plot};
use crate::series::{format_table, write_atomic, Layout};
use crate::{Error, Result};

/// Manifest written next to the artifacts.
pub const METADATA_FILE: &str = "metadata.json";

const METADATA_SCHEMA_VERSION: u32 = 1;

/// One output file, path relative to the run directory with `/` separators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(path: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            path: path.into(),
            bytes: bytes.into(),
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance of a run; enough to repeat it bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub samples: usize,
    pub output_dim: usize,
    pub observer_order: usize,
    pub transient_trim: f64,
    pub fit_window: [usize; 2],
    pub spectrum: Vec<f64>,
    pub explained_ratio: f64,
    pub files: Vec<FileRecord>,
    /// Seconds since the Unix epoch; only present when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
    pub config: PipelineConfig,
}

/// Result of [`verify_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub checked: usize,
    /// Paths whose recomputed or on-disk hash differs from the manifest.
    pub mismatched: Vec<String>,
}

impl VerifyOutcome {
    pub fn is_ok(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// The config as recorded in artifacts: the output directory is dropped so
/// runs into different directories stay byte-identical.
pub(crate) fn portable(config: &PipelineConfig) -> PipelineConfig {
    PipelineConfig {
        output_dir: None,
        ..config.clone()
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(value)? + "\n").into_bytes())
}

/// Serialize every artifact of a run, in a fixed order.
pub fn render_artifacts(outcome: &PipelineOutcome, config: &PipelineConfig) -> Result<Vec<Artifact>> {
    let mut out = vec![
        Artifact::new("config.json", portable(config).to_json()?),
        Artifact::new("components.csv", outcome.components.to_csv()),
        Artifact::new("pca.json", outcome.pca.to_json()?),
        Artifact::new("observer.json", json(&outcome.observer.to_document())?),
        Artifact::new("report.json", outcome.report.to_json()?),
    ];
    if config.write_intermediates {
        if let Some(truth) = &outcome.truth {
            out.push(Artifact::new("truth.csv", truth.to_csv()));
        }
        let y = &outcome.outputs;
        out.push(Artifact::new("outputs.csv", format_table("y", y.times(), y.values())));
        out.push(Artifact::new("lifted.csv", outcome.lifted.to_csv()));
        if let Some(frames) = &outcome.frames {
            for (k, f) in frames.frames().iter().enumerate() {
                out.push(Artifact::new(format!("frames/frame_{k:06}.ppm"), encode_ppm(f)));
            }
        }
    }
    if config.plots {
        for (name, svg) in component_plots(&outcome.components)? {
            out.push(Artifact::new(format!("plots/{name}"), svg));
        }
        if let Some(truth) = &outcome.truth {
            out.push(Artifact::new(
                "plots/truth_time.svg",
                matrix_time_plot(truth.times(), truth.states(), "x", "true states")?,
            ));
            if truth.dim() == 3 {
                let cols: Vec<Vec<f64>> = (0..3).map(|j| truth.states().col(j)).collect();
                out.push(Artifact::new(
                    "plots/truth_3d.svg",
                    axonometric_plot([&cols[0], &cols[1], &cols[2]], ["x1", "x2", "x3"], "true states")?,
                ));
            }
        }
        if let Layout::Planar { .. } = outcome.outputs.layout() {
            let means = channel_means(&outcome.outputs)?;
            let lines = ["red", "green", "blue"]
                .iter()
                .enumerate()
                .map(|(c, name)| (name.to_string(), means.col(c)))
                .collect::<Vec<_>>();
            out.push(Artifact::new(
                "plots/channel_means.svg",
                crate::plot::time_plot(outcome.outputs.times(), &lines, "ROI channel means")?,
            ));
        }
    }
    Ok(out)
}

fn metadata(
    outcome: &PipelineOutcome,
    config: &PipelineConfig,
    artifacts: &[Artifact],
    timestamp: bool,
) -> Result<RunMetadata> {
    let created_unix = timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let config = portable(config);
    Ok(RunMetadata {
        schema_version: METADATA_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.sha256()?,
        seeds: outcome.report.seeds.clone(),
        samples: outcome.outputs.len(),
        output_dim: outcome.outputs.dim(),
        observer_order: outcome.observer.order(),
        transient_trim: outcome.pca.trim,
        fit_window: outcome.pca.fit_window,
        spectrum: outcome.pca.model.spectrum.clone(),
        explained_ratio: outcome.pca.model.explained_ratio,
        files: artifacts.iter().map(record).collect(),
        created_unix,
        config,
    })
}

fn record(a: &Artifact) -> FileRecord {
    FileRecord {
        path: a.path.clone(),
        sha256: a.sha256(),
        bytes: a.bytes.len() as u64,
    }
}

/// Write artifacts below `dir` atomically and return their records.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<FileRecord>> {
    for a in artifacts {
        write_atomic(&dir.join(&a.path), &a.bytes)?;
    }
    Ok(artifacts.iter().map(record).collect())
}

/// Write every artifact and the manifest into `dir`.
pub fn write_run(
    outcome: &PipelineOutcome,
    config: &PipelineConfig,
    dir: &Path,
    timestamp: bool,
) -> Result<RunMetadata> {
    let artifacts = render_artifacts(outcome, config)?;
    write_artifacts(dir, &artifacts)?;
    let meta = metadata(outcome, config, &artifacts, timestamp)?;
    write_atomic(&dir.join(METADATA_FILE), &json(&meta)?)?;
    Ok(meta)
}

/// Re-run the config recorded in `dir` and compare artifact hashes against
/// the manifest and the files on disk.
pub fn verify_run(dir: &Path) -> Result<VerifyOutcome> {
    let text = std::fs::read_to_string(dir.join(METADATA_FILE))?;
    let meta: RunMetadata = serde_json::from_str(&text).map_err(|e| {
        Error::parse(
            dir.join(METADATA_FILE).display().to_string(),
            format!("line {}", e.line()),
            e.to_string(),
        )
    })?;
    let outcome = run_pipeline(&meta.config)?;
    let fresh: BTreeMap<String, String> = render_artifacts(&outcome, &meta.config)?
        .iter()
        .map(|a| (a.path.clone(), a.sha256()))
        .collect();
    let mut mismatched = Vec::new();
    for rec in &meta.files {
        let on_disk = std::fs::read(dir.join(&rec.path))
            .map(|b| hex::encode(Sha256::digest(&b)))
            .ok();
        if fresh.get(&rec.path) != Some(&rec.sha256) || on_disk.as_ref() != Some(&rec.sha256) {
            mismatched.push(rec.path.clone());
        }
    }
    for path in fresh.keys() {
        if !meta.files.iter().any(|r| &r.path == path) {
            mismatched.push(path.clone());
        }
    }
    Ok(VerifyOutcome {
        checked: meta.files.len(),
        mismatched,
    })
}
