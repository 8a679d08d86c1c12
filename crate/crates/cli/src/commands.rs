use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde_json::json;

use kkl_core::diagnostics::Report;
use kkl_core::dynamics::Trajectory;
use kkl_core::ingest::{encode_ppm, read_csv_series, Roi};
use kkl_core::lifting::{lift as lift_series, make_observer_with_order, LiftedSeries, ObserverDocument};
use kkl_core::pipeline::{
    acquire, diagnose_window, resolve_output_dir, run_pipeline, verify_run, write_artifacts, write_run,
    Artifact, DiagnosticsConfig, ObserverSpec, OutputMapConfig, PipelineConfig, SourceConfig,
};
use kkl_core::plot::{render_plot, PlotSpec};
use kkl_core::reduction::{reduce_series, ComponentSeries, PcaReport, ReduceOptions};
use kkl_core::series::{format_table, parse_named_table, uniform_interval};
use kkl_core::Error;

use crate::{
    AlignArgs, Common, IngestArgs, LiftArgs, ObserverArgs, PcaArgs, PipelineArgs, PlotArgs, PlotKind,
    RenderArgs, SimulateArgs,
};

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::Validation(msg.into()).into()
}

fn load_config(common: &Common) -> Result<Option<PipelineConfig>> {
    common
        .config
        .as_deref()
        .map(PipelineConfig::load)
        .transpose()
        .map_err(Into::into)
}

fn output_dir(common: &Common, config: Option<&PipelineConfig>) -> PathBuf {
    resolve_output_dir(common.output_dir.as_deref(), config)
}

/// Write the artifacts plus `{command}.meta.json` describing them.
fn finish(
    dir: &Path,
    command: &str,
    config: Option<&PipelineConfig>,
    seeds: &BTreeMap<String, u64>,
    artifacts: &[Artifact],
) -> Result<()> {
    let files = write_artifacts(dir, artifacts).with_context(|| format!("writing into {}", dir.display()))?;
    let config = config.map(|c| PipelineConfig {
        output_dir: None,
        ..c.clone()
    });
    let sha = config.as_ref().map(|c| c.sha256()).transpose()?;
    let meta = json!({
        "command": command,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_sha256": sha,
        "seeds": seeds,
        "files": files,
        "config": config,
    });
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    write_artifacts(dir, &[Artifact::new(format!("{command}.meta.json"), text)])?;
    log::info!("wrote {} file(s) to {}", files.len() + 1, dir.display());
    Ok(())
}

/// Config for the simulation commands: loaded or the default Oregonator run,
/// with flag overrides applied.
fn simulation_config(args: &SimulateArgs, output_map: Option<OutputMapConfig>) -> Result<PipelineConfig> {
    let mut cfg = match load_config(&args.common)? {
        Some(c) => c,
        None => {
            let mut c = PipelineConfig::synthetic(3, 0, 0);
            if let SourceConfig::OregonatorSynthetic { output_map, .. } = &mut c.source {
                *output_map = OutputMapConfig::PassThrough;
            }
            c
        }
    };
    let SourceConfig::OregonatorSynthetic {
        horizon,
        warmup,
        sampling_interval,
        output_map: map,
        ..
    } = &mut cfg.source
    else {
        return Err(invalid("this command needs an oregonator-synthetic source"));
    };
    if let Some(h) = args.horizon {
        *horizon = h;
    }
    if let Some(w) = args.warmup {
        *warmup = w;
    }
    if let Some(dt) = args.dt {
        *sampling_interval = dt;
    }
    if let Some(m) = output_map {
        *map = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let cfg = simulation_config(args, Some(OutputMapConfig::PassThrough))?;
    let data = acquire(&cfg)?;
    let truth = data.truth.expect("synthetic source has a trajectory");
    log::info!("simulated {} samples over {:.3} time units", truth.len(), truth.span());
    let dir = output_dir(&args.common, Some(&cfg));
    finish(
        &dir,
        "simulate",
        Some(&cfg),
        &data.seeds,
        &[Artifact::new("truth.csv", truth.to_csv())],
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn render_frames(args: &RenderArgs) -> Result<ExitCode> {
    let base = load_config(&args.sim.common)?;
    let (mut width, mut height, mut noise, mut seed, mut color_map) = (10, 10, 0.0, 0, Default::default());
    if let Some(SourceConfig::OregonatorSynthetic {
        output_map: OutputMapConfig::RenderedFrames {
            width: w,
            height: h,
            noise: s,
            seed: k,
            color_map: c,
        },
        ..
    }) = base.as_ref().map(|c| &c.source)
    {
        (width, height, noise, seed, color_map) = (*w, *h, *s, *k, c.clone());
    }
    let map = OutputMapConfig::RenderedFrames {
        width: args.width.unwrap_or(width),
        height: args.height.unwrap_or(height),
        noise: args.noise.unwrap_or(noise),
        seed: args.seed.unwrap_or(seed),
        color_map,
    };
    let cfg = simulation_config(&args.sim, Some(map))?;
    let data = acquire(&cfg)?;
    let frames = data.frames.expect("rendered source has frames");
    let truth = data.truth.expect("synthetic source has a trajectory");
    let mut artifacts = vec![Artifact::new("truth.csv", truth.to_csv())];
    for (k, f) in frames.frames().iter().enumerate() {
        artifacts.push(Artifact::new(format!("frames/frame_{k:06}.ppm"), encode_ppm(f)));
    }
    log::info!("rendered {} frames of {}x{}", frames.len(), frames.width(), frames.height());
    let dir = output_dir(&args.sim.common, Some(&cfg));
    finish(&dir, "render-frames", Some(&cfg), &data.seeds, &artifacts)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_roi(text: &str) -> Result<Roi> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid(format!("bad --roi `{text}`: {e}")))?;
    match parts[..] {
        [x0, y0, w, h] => Ok(Roi::new(x0, y0, w, h)),
        _ => Err(invalid(format!("--roi needs x0,y0,width,height, got `{text}`"))),
    }
}

pub fn ingest(args: &IngestArgs) -> Result<ExitCode> {
    let loaded = load_config(&args.common)?;
    let roi = args.roi.as_deref().map(parse_roi).transpose()?;
    let mut cfg = match (&args.input, loaded) {
        (Some(path), base) => {
            let mut c = base.unwrap_or_else(|| PipelineConfig::synthetic(3, 0, 0));
            c.source = SourceConfig::PpmSequence {
                path: path.clone(),
                frame_interval: 0.075,
                roi: None,
                truth: None,
            };
            c
        }
        (None, Some(c)) => c,
        (None, None) => return Err(invalid("ingest needs --input or --config")),
    };
    if let SourceConfig::PpmSequence {
        frame_interval,
        roi: r,
        ..
    } = &mut cfg.source
    {
        if let Some(dt) = args.frame_interval {
            *frame_interval = dt;
        }
        if roi.is_some() {
            *r = roi;
        }
    } else if args.frame_interval.is_some() || roi.is_some() {
        return Err(invalid("--frame-interval and --roi apply to ppm-sequence sources only"));
    }
    cfg.validate()?;
    let data = acquire(&cfg)?;
    let y = &data.outputs;
    log::info!("ingested {} samples of {} outputs", y.len(), y.dim());
    let mut artifacts = vec![Artifact::new("outputs.csv", format_table("y", y.times(), y.values()))];
    if let Some(truth) = &data.truth {
        artifacts.push(Artifact::new("truth.csv", truth.to_csv()));
    }
    let dir = output_dir(&args.common, Some(&cfg));
    finish(&dir, "ingest", Some(&cfg), &data.seeds, &artifacts)?;
    Ok(ExitCode::SUCCESS)
}

fn observer_spec(base: Option<&PipelineConfig>, args: &ObserverArgs) -> ObserverSpec {
    let mut spec = base.map(|c| c.observer.clone()).unwrap_or_default();
    if let Some(v) = args.rate_min {
        spec.rate_min = v;
    }
    if let Some(v) = args.rate_max {
        spec.rate_max = v;
    }
    if let Some(v) = args.observer_seed {
        spec.seed = v;
    }
    if args.state_dim.is_some() {
        spec.state_dim = args.state_dim;
    }
    if args.order.is_some() {
        spec.order = args.order;
    }
    spec
}

pub fn lift(args: &LiftArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let (outputs, mut seeds) = match (&args.input, &cfg) {
        (Some(path), _) => (read_csv_series(path)?, BTreeMap::new()),
        (None, Some(c)) => {
            let data = acquire(c)?;
            (data.outputs, data.seeds)
        }
        (None, None) => return Err(invalid("lift needs --input or --config")),
    };
    let spec = observer_spec(cfg.as_ref(), &args.observer);
    let n = spec
        .state_dim
        .unwrap_or_else(|| cfg.as_ref().map_or(3, |c| c.target_dim));
    let p = outputs.dim();
    let order = spec.order.unwrap_or(p * (n + 1));
    let observer = make_observer_with_order(order, p, n, (spec.rate_min, spec.rate_max), spec.seed)?;
    let lifted = lift_series(&outputs, &observer, None)?;
    seeds.insert("observer".into(), spec.seed);
    log::info!("lifted {} samples into {} observer states", lifted.len(), observer.order());
    let doc = serde_json::to_string_pretty(&observer.to_document())? + "\n";
    let dir = output_dir(&args.common, cfg.as_ref());
    finish(
        &dir,
        "lift",
        cfg.as_ref(),
        &seeds,
        &[
            Artifact::new("lifted.csv", lifted.to_csv()),
            Artifact::new("observer.json", doc),
        ],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn read_observer(path: &Path) -> Result<ObserverDocument> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            path: path.display().to_string(),
            location: format!("line {}", e.line()),
            message: e.to_string(),
        }
        .into()
    })
}

pub fn pca(args: &PcaArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let doc = args.observer.as_deref().map(read_observer).transpose()?;
    let min_rate = match (&doc, args.min_rate) {
        (_, Some(r)) => r,
        (Some(d), None) => d.rates.iter().copied().fold(f64::INFINITY, f64::min),
        (None, None) => return Err(invalid("pca needs --observer or --min-rate")),
    };
    let lifted = LiftedSeries::read_csv(&args.input, min_rate)?;
    let options = ReduceOptions {
        dim: args.dim.or(cfg.as_ref().map(|c| c.target_dim)).unwrap_or(3),
        trim: args.trim.or(cfg.as_ref().and_then(|c| c.transient_trim)),
        fit_fraction: args.fit_fraction.or(cfg.as_ref().map(|c| c.fit_fraction)).unwrap_or(1.0),
    };
    let (mut report, components) = reduce_series(&lifted, &options)?;
    report.observer_seed = doc.as_ref().and_then(|d| d.seed);
    log::info!(
        "explained ratio {:.4} over fit window {:?}",
        report.model.explained_ratio,
        report.fit_window
    );
    let dir = output_dir(&args.common, cfg.as_ref());
    finish(
        &dir,
        "pca",
        cfg.as_ref(),
        &report.observer_seed.map(|s| ("observer".to_string(), s)).into_iter().collect(),
        &[
            Artifact::new("components.csv", components.to_csv()),
            Artifact::new("pca.json", report.to_json()?),
        ],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn print_report(report: &Report) {
    if let Some(a) = &report.alignment {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
        println!("R^2:   {}", fmt(&a.r_squared));
        println!("nRMSE: {}", fmt(&a.nrmse));
    }
    if let Some(ok) = report.recovered {
        println!("recovered: {ok}");
    }
    if let Some(p) = &report.periods {
        match &p.truth {
            Some(t) => println!("period: {:.4} (truth {:.4})", p.recovered.period, t.period),
            None => println!("period: {:.4}", p.recovered.period),
        }
    }
    if let Some(r) = report.recurrence {
        println!("recurrence error: {r:.4}");
    }
}

pub fn align(args: &AlignArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let components = ComponentSeries::read_csv(&args.components)?;
    let truth = args.truth.as_deref().map(Trajectory::read_csv).transpose()?;
    let start = match (&args.pca, args.from) {
        (Some(path), _) => PcaReport::read_json(path)?.fit_window[0],
        (None, Some(t)) => components.index_at(t),
        (None, None) => 0,
    };
    let end = components.len();
    if start >= end {
        return Err(invalid(format!("window start {start} leaves no samples out of {end}")));
    }
    if let Some(t) = &truth {
        if t.len() != end {
            return Err(invalid(format!("truth has {} samples, components have {end}", t.len())));
        }
    }
    let mut diag: DiagnosticsConfig = cfg.as_ref().map(|c| c.diagnostics.clone()).unwrap_or_default();
    if let Some(v) = args.nrmse_threshold {
        diag.nrmse_threshold = v;
    }
    let dt = uniform_interval(components.times())?;
    let report = diagnose_window(
        &components.slice(start, end),
        truth.map(|t| t.slice(start, end)).as_ref(),
        dt,
        &diag,
    )?;
    print_report(&report);
    let dir = output_dir(&args.common, cfg.as_ref());
    finish(
        &dir,
        "align",
        cfg.as_ref(),
        &BTreeMap::new(),
        &[Artifact::new("report.json", report.to_json()?)],
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn pipeline(args: &PipelineArgs) -> Result<ExitCode> {
    if let Some(dir) = &args.verify {
        let outcome = verify_run(dir)?;
        if outcome.is_ok() {
            println!("verified {} file(s) in {}", outcome.checked, dir.display());
            return Ok(ExitCode::SUCCESS);
        }
        for path in &outcome.mismatched {
            println!("mismatch: {path}");
        }
        log::error!("{} of {} file(s) differ", outcome.mismatched.len(), outcome.checked);
        return Ok(ExitCode::FAILURE);
    }

    let Some(mut cfg) = load_config(&args.common)? else {
        return Err(invalid("pipeline needs --config or --verify"));
    };
    cfg.observer = observer_spec(Some(&cfg), &args.observer);
    if let Some(v) = args.target_dim {
        cfg.target_dim = v;
    }
    if let Some(v) = args.fit_fraction {
        cfg.fit_fraction = v;
    }
    if args.trim.is_some() {
        cfg.transient_trim = args.trim;
    }
    cfg.plots &= !args.no_plots;
    cfg.write_intermediates &= !args.no_intermediates;
    cfg.validate()?;

    let outcome = run_pipeline(&cfg)?;
    let dir = output_dir(&args.common, Some(&cfg));
    let meta = write_run(&outcome, &cfg, &dir, args.timestamp)
        .with_context(|| format!("writing run into {}", dir.display()))?;
    println!(
        "samples {}  outputs {}  observer order {}  explained {:.4}",
        meta.samples, meta.output_dim, meta.observer_order, meta.explained_ratio
    );
    print_report(&outcome.report);
    log::info!("wrote {} file(s) and {} to {}", meta.files.len(), kkl_core::pipeline::METADATA_FILE, dir.display());
    Ok(ExitCode::SUCCESS)
}

pub fn plot(args: &PlotArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let text = std::fs::read_to_string(&args.input)
        .map_err(Error::from)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let table = parse_named_table(&text, &args.input.display().to_string())?;
    let cols = &args.columns;
    let spec = match args.kind {
        PlotKind::Time => PlotSpec::Time { columns: cols.clone() },
        PlotKind::Pair => match &cols[..] {
            [x, y] => PlotSpec::Pair { x: x.clone(), y: y.clone() },
            _ => return Err(invalid(format!("pair plot needs 2 columns, got {}", cols.len()))),
        },
        PlotKind::Axonometric => match &cols[..] {
            [x, y, z] => PlotSpec::Axonometric {
                x: x.clone(),
                y: y.clone(),
                z: z.clone(),
            },
            _ => return Err(invalid(format!("axonometric plot needs 3 columns, got {}", cols.len()))),
        },
    };
    let svg = render_plot(&table, &spec, &args.title)?;
    let path = args
        .output
        .clone()
        .unwrap_or_else(|| output_dir(&args.common, cfg.as_ref()).join("plot.svg"));
    let (dir, name) = match (path.parent(), path.file_name()) {
        (Some(d), Some(n)) => (d.to_path_buf(), n.to_string_lossy().into_owned()),
        _ => return Err(invalid(format!("bad output path {}", path.display()))),
    };
    write_artifacts(&dir, &[Artifact::new(name, svg)])?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}
