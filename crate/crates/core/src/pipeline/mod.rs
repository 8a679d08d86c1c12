//! Config-driven runs: acquire outputs, lift, reduce, diagnose, emit artifacts.
//!
//! [`run_pipeline`] computes everything in memory. [`write_run`] renders the
//! artifacts, writes them atomically and records a [`RunMetadata`] manifest
//! with SHA-256 hashes; [`verify_run`] re-runs the embedded config and
//! compares hashes.

mod artifacts;
mod config;

pub use artifacts::{
    render_artifacts, verify_run, write_artifacts, write_run, Artifact, FileRecord, RunMetadata,
    VerifyOutcome,
    METADATA_FILE,
};
pub use config::{
    resolve_output_dir, DiagnosticsConfig, ObserverSpec, OutputMapConfig, PipelineConfig,
    SourceConfig, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV,
};

use std::collections::BTreeMap;

use crate::diagnostics::{
    align_affine, estimate_period, recurrence_error, PeriodComparison, PeriodEstimate, Report,
};
use crate::dynamics::{
    apply_output_map, sample_uniform, simulate_oregonator, OutputMap, Trajectory,
};
use crate::ingest::{extract_roi, read_csv_series, read_ppm_sequence, render_synthetic_frames, FrameSequence, Roi};
use crate::lifting::{lift, make_observer_with_order, LiftedSeries, ObserverConfig};
use crate::reduction::{reduce_series, ComponentSeries, PcaReport, ReduceOptions};
use crate::series::OutputSeries;
use crate::{Error, Result};

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// Ground-truth states on the output grid, when known.
    pub truth: Option<Trajectory>,
    /// Rendered or loaded frames, for frame sources.
    pub frames: Option<FrameSequence>,
    pub outputs: OutputSeries,
    pub observer: ObserverConfig,
    pub lifted: LiftedSeries,
    pub pca: PcaReport,
    pub components: ComponentSeries,
    pub report: Report,
}

impl PipelineOutcome {
    /// Index of the first post-transient sample.
    pub fn post_transient_start(&self) -> usize {
        self.pca.fit_window[0]
    }
}

/// Output signal of a run together with whatever produced it.
#[derive(Debug, Clone)]
pub struct SourceData {
    pub truth: Option<Trajectory>,
    pub frames: Option<FrameSequence>,
    pub outputs: OutputSeries,
    /// Seeds consumed so far, by role.
    pub seeds: BTreeMap<String, u64>,
}

/// Simulate, render or load the configured source.
pub fn acquire(config: &PipelineConfig) -> Result<SourceData> {
    let mut seeds = BTreeMap::new();
    match &config.source {
        SourceConfig::OregonatorSynthetic {
            params,
            x0,
            horizon,
            warmup,
            sampling_interval,
            integrator,
            output_map,
        } => {
            let dt = *sampling_interval;
            let truth = (|| {
                let raw = simulate_oregonator(params, x0, warmup + horizon, integrator)?;
                let sampled = sample_uniform(&raw, dt)?;
                let start = sampled.times().partition_point(|&t| t < warmup - 1e-9 * dt);
                let t0 = sampled.times()[start];
                Ok(sampled.slice(start, sampled.len()).shifted(t0))
            })()
            .map_err(|e: Error| e.in_stage("simulate"))?;

            let (outputs, frames) = (|| match output_map {
                OutputMapConfig::RandomSmooth { dim, seed } => {
                    seeds.insert("output_map".into(), *seed);
                    let map = OutputMap::random_smooth(&truth, *dim, *seed)?;
                    Ok((apply_output_map(&truth, &map)?, None))
                }
                OutputMapConfig::PassThrough => {
                    Ok((apply_output_map(&truth, &OutputMap::pass_through(truth.dim()))?, None))
                }
                OutputMapConfig::RenderedFrames {
                    width,
                    height,
                    noise,
                    seed,
                    color_map,
                } => {
                    seeds.insert("pixel_noise".into(), *seed);
                    let frames = render_synthetic_frames(&truth, *width, *height, color_map, *noise, *seed)?;
                    let y = extract_roi(&frames, &Roi::full(*width, *height))?;
                    Ok((y, Some(frames)))
                }
            })()
            .map_err(|e: Error| e.in_stage("output"))?;
            Ok(SourceData {
                truth: Some(truth),
                frames,
                outputs,
                seeds,
            })
        }
        SourceConfig::Csv { path, truth } => (|| {
            let outputs = read_csv_series(path)?;
            let truth = truth.as_deref().map(Trajectory::read_csv).transpose()?;
            Ok(SourceData {
                truth,
                frames: None,
                outputs,
                seeds,
            })
        })()
        .map_err(|e: Error| e.in_stage("ingest")),
        SourceConfig::PpmSequence {
            path,
            frame_interval,
            roi,
            truth,
        } => (|| {
            let frames = read_ppm_sequence(path, *frame_interval)?;
            let roi = roi.unwrap_or(Roi::full(frames.width(), frames.height()));
            let outputs = extract_roi(&frames, &roi)?;
            let truth = truth.as_deref().map(Trajectory::read_csv).transpose()?;
            Ok(SourceData {
                truth,
                frames: Some(frames),
                outputs,
                seeds,
            })
        })()
        .map_err(|e: Error| e.in_stage("ingest")),
    }
}

/// Run every stage in memory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let SourceData {
        truth,
        frames,
        outputs,
        mut seeds,
    } = acquire(config)?;

    let n = config.state_dim();
    let p = outputs.dim();
    let spec = &config.observer;
    seeds.insert("observer".into(), spec.seed);
    let (observer, lifted) = (|| {
        let order = spec.order.unwrap_or(p * (n + 1));
        let observer = make_observer_with_order(order, p, n, (spec.rate_min, spec.rate_max), spec.seed)?;
        let lifted = lift(&outputs, &observer, None)?;
        Ok((observer, lifted))
    })()
    .map_err(|e: Error| e.in_stage("lift"))?;
    log::info!(
        "lifted {} samples of p = {p} outputs into n_z = {} observer states",
        outputs.len(),
        observer.order()
    );

    let options = ReduceOptions {
        dim: config.target_dim,
        trim: config.transient_trim,
        fit_fraction: config.fit_fraction,
    };
    let (mut pca, components) = reduce_series(&lifted, &options).map_err(|e| e.in_stage("reduce"))?;
    pca.observer_seed = Some(spec.seed);

    let report = diagnose(config, &outputs, truth.as_ref(), &pca, &components, seeds)
        .map_err(|e| e.in_stage("diagnose"))?;
    Ok(PipelineOutcome {
        truth,
        frames,
        outputs,
        observer,
        lifted,
        pca,
        components,
        report,
    })
}

fn diagnose(
    config: &PipelineConfig,
    outputs: &OutputSeries,
    truth: Option<&Trajectory>,
    pca: &PcaReport,
    components: &ComponentSeries,
    seeds: BTreeMap<String, u64>,
) -> Result<Report> {
    let start = pca.fit_window[0];
    let end = components.len();
    let truth_post = match truth {
        Some(t) if t.len() == components.len() => Some(t.slice(start, end)),
        Some(t) => {
            return Err(Error::validation(format!(
                "truth has {} samples, outputs have {}",
                t.len(),
                components.len()
            )))
        }
        None => None,
    };
    let dt = outputs.interval()?;
    let mut report = diagnose_window(
        &components.slice(start, end),
        truth_post.as_ref(),
        dt,
        &config.diagnostics,
    )?;
    report.spectrum = pca.model.spectrum.clone();
    report.explained_ratio = Some(pca.model.explained_ratio);
    report.seeds = seeds;
    report.config_sha256 = Some(artifacts::portable(config).sha256()?);
    Ok(report)
}

/// Alignment, period and recurrence diagnostics on an already trimmed window.
///
/// `truth`, when given, must share the component time grid.
pub fn diagnose_window(
    post: &ComponentSeries,
    truth: Option<&Trajectory>,
    dt: f64,
    diag: &DiagnosticsConfig,
) -> Result<Report> {
    let mut report = Report::default();
    if let Some(t) = truth {
        if t.len() != post.len() {
            return Err(Error::validation(format!(
                "truth has {} samples, components have {}",
                t.len(),
                post.len()
            )));
        }
        if diag.align {
            report = report.with_alignment(align_affine(post, t)?, diag.nrmse_threshold);
        }
    }

    let mut recovered_period: Option<PeriodEstimate> = None;
    if diag.period && post.len() >= 3 {
        let recovered = period_or_invalid(&post.values().col(0), dt)?;
        let truth_period = match truth {
            Some(tp) => Some(period_or_invalid(&tp.states().col(0), dt)?),
            None => None,
        };
        recovered_period = Some(recovered);
        report.periods = Some(PeriodComparison::new(truth_period, recovered));
    }

    if diag.recurrence {
        match recovered_period {
            Some(pe) if pe.valid && post.times()[post.len() - 1] - post.times()[0] >= 2.0 * pe.period => {
                report.recurrence = Some(recurrence_error(
                    post.times(),
                    post.values(),
                    pe.period,
                    post.times()[0],
                )?);
            }
            _ => log::warn!("recurrence skipped: no valid period spanning two cycles"),
        }
    }
    Ok(report)
}

fn period_or_invalid(series: &[f64], dt: f64) -> Result<PeriodEstimate> {
    match estimate_period(series, dt, None) {
        Ok(p) => Ok(p),
        Err(Error::Validation(msg)) => {
            log::warn!("period estimate skipped: {msg}");
            Ok(PeriodEstimate {
                period: 0.0,
                peak: 0.0,
                valid: false,
            })
        }
        Err(e) => Err(e),
    }
}
