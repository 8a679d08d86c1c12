//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use kkl_core::diagnostics::{estimate_period, recurrence_error};
use kkl_core::dynamics::{
    integrate, oregonator_equilibrium, oregonator_rhs, sample_uniform, simulate_oregonator,
    IntegratorConfig, OregonatorParams, Trajectory,
};
use kkl_core::ingest::{encode_ppm, parse_ppm, Frame};
use kkl_core::lifting::{
    lift, make_observer, solve_sylvester, verify_linear_convergence, ObserverConfig,
};
use kkl_core::linalg::{sym_eig, Matrix};
use kkl_core::pipeline::{render_artifacts, run_pipeline, OutputMapConfig, PipelineConfig, SourceConfig};
use kkl_core::reduction::{fit_pca, fit_whiten, project, reduce_series, ReduceOptions};
use kkl_core::series::{format_table, parse_table};
use kkl_core::lifting::LiftedSeries;
use kkl_core::OutputSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn check(ok: bool, detail: &mut Vec<String>, msg: String) -> bool {
    if !ok {
        detail.push(format!("FAILED {msg}"));
    } else {
        detail.push(msg);
    }
    ok
}

fn main() {
    let criteria: [(&str, Check, Duration); 8] = [
        ("1 Oregonator fidelity", oregonator_fidelity, Duration::from_secs(120)),
        ("2 lifting exactness", lifting_exactness, Duration::from_secs(30)),
        ("3 Sylvester linear oracle", sylvester_oracle, Duration::from_secs(30)),
        ("4 PCA correctness", pca_correctness, Duration::from_secs(60)),
        ("5 end-to-end synthetic recovery", synthetic_recovery, Duration::from_secs(180)),
        ("6 full-scale rendered frames", full_scale, Duration::from_secs(600)),
        ("7 error vs fitting window", error_vs_window, Duration::from_secs(600)),
        ("8 determinism and formats", determinism, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|k| name.starts_with(k.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.1}s of {}s) {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn finish(ok: bool, detail: Vec<String>) -> Outcome {
    Outcome {
        pass: ok,
        detail: detail.join("; "),
    }
}

/// Post-transient Oregonator orbit sampled at `dt`.
fn orbit(cfg: &IntegratorConfig, dt: f64, transient: f64, horizon: f64) -> Trajectory {
    let p = OregonatorParams::default();
    let raw = simulate_oregonator(&p, &[0.5, 0.5, 0.5], transient + horizon, cfg).unwrap();
    let s = sample_uniform(&raw, dt).unwrap();
    let start = s.times().partition_point(|&t| t < transient - 1e-9);
    s.slice(start, s.len())
}

fn oregonator_fidelity() -> Outcome {
    let mut d = Vec::new();
    let p = OregonatorParams::default();
    let xs = oregonator_equilibrium(&p);
    let r = oregonator_rhs(&xs, &p);
    let res = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut ok = check(res <= 1e-9, &mut d, format!("equilibrium residual {res:.2e}"));

    let cfg = IntegratorConfig::default();
    let raw = simulate_oregonator(&p, &[0.5, 0.5, 0.5], 60.0, &cfg).unwrap();
    let min = raw.states().as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
    ok &= check(min > 0.0, &mut d, format!("min state {min:.3e}"));

    let dt = 0.01;
    let o = orbit(&cfg, dt, 20.0, 40.0);
    let pe = estimate_period(&o.states().col(0), dt, None).unwrap();
    ok &= check(pe.valid, &mut d, format!("period {:.4}", pe.period));
    if pe.valid {
        let rec = recurrence_error(o.times(), o.states(), pe.period, o.times()[0]).unwrap();
        ok &= check(rec <= 0.02, &mut d, format!("recurrence {:.3}%", rec * 100.0));
        let o2 = orbit(&cfg.tightened(0.5), dt, 20.0, 40.0);
        let pe2 = estimate_period(&o2.states().col(0), dt, None).unwrap();
        let change = (pe2.period - pe.period).abs() / pe.period;
        ok &= check(change < 1e-3, &mut d, format!("tolerance-halving change {:.2e}", change));
    }
    finish(ok, d)
}

fn random_series(rng: &mut ChaCha8Rng, n: usize, p: usize, h: f64) -> OutputSeries {
    let freqs: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..3.0)).collect();
    let phases: Vec<f64> = (0..p).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    let times: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let y = Matrix::from_fn(n, p, |k, j| (freqs[j] * times[k] + phases[j]).sin() + 0.2 * j as f64);
    OutputSeries::new(times, y).unwrap()
}

fn lifting_exactness() -> Outcome {
    let mut d = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tight = IntegratorConfig {
        rtol: 1e-12,
        atol: 1e-14,
        h_init: 1e-6,
        h_max: 1e-2,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let p = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=(50 / p - 1).min(6));
        let cfg = make_observer(n, p, (1.0, 50.0), 100 + trial).unwrap();
        let h = 0.075;
        let y = random_series(&mut rng, 60, p, h);
        let z = lift(&y, &cfg, None).unwrap();
        let a = cfg.rates().to_vec();
        let mut state = vec![0.0; cfg.order()];
        for k in 0..y.len() - 1 {
            let u = cfg.input().matvec(y.values().row(k)).unwrap();
            let tr = integrate(
                |_, zz, dz| {
                    for i in 0..zz.len() {
                        dz[i] = -a[i] * zz[i] + u[i];
                    }
                },
                &state,
                (0.0, h),
                &tight,
            )
            .unwrap();
            state = tr.last_state().to_vec();
            let scale = state.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (zi, si) in z.states().row(k + 1).iter().zip(&state) {
                worst = worst.max((zi - si).abs() / scale);
            }
        }
    }
    let mut ok = check(worst <= 1e-9, &mut d, format!("ZOH vs adaptive max rel {worst:.2e}"));

    // Homogeneous decay against e^{−a t}.
    let cfg = ObserverConfig::new(vec![0.7, 3.0, 11.0], Matrix::identity(3), 2).unwrap();
    let h = 0.05;
    let times: Vec<f64> = (0..101).map(|k| k as f64 * h).collect();
    let y = OutputSeries::new(times.clone(), Matrix::zeros(101, 3)).unwrap();
    let z = lift(&y, &cfg, Some(&[1.0, 1.0, 1.0])).unwrap();
    let mut decay_err = 0.0f64;
    for (k, t) in times.iter().enumerate() {
        for (i, a) in cfg.rates().iter().enumerate() {
            let exact = (-a * t).exp();
            decay_err = decay_err.max((z.states()[(k, i)] - exact).abs() / exact);
        }
    }
    ok &= check(decay_err <= 1e-13, &mut d, format!("decay rel {decay_err:.1e}"));

    // Linearity in the input and forgetting of the initial condition.
    let cfg = make_observer(2, 3, (1.0, 50.0), 7).unwrap();
    let y1 = random_series(&mut rng, 200, 3, 0.05);
    let y2 = random_series(&mut rng, 200, 3, 0.05);
    let combo = OutputSeries::new(
        y1.times().to_vec(),
        y1.values().scale(2.0).add(&y2.values().scale(-0.5)).unwrap(),
    )
    .unwrap();
    let z1 = lift(&y1, &cfg, None).unwrap();
    let z2 = lift(&y2, &cfg, None).unwrap();
    let zc = lift(&combo, &cfg, None).unwrap();
    let expect = z1.states().scale(2.0).add(&z2.states().scale(-0.5)).unwrap();
    let lin = zc.states().sub(&expect).unwrap().max_abs() / expect.max_abs();
    ok &= check(lin <= 1e-12, &mut d, format!("linearity rel {lin:.1e}"));

    let z0: Vec<f64> = (0..cfg.order()).map(|i| (i as f64).sin() * 3.0).collect();
    let zb = lift(&y1, &cfg, Some(&z0)).unwrap();
    let mut forget = true;
    for (k, t) in y1.times().iter().enumerate() {
        for i in 0..cfg.order() {
            let diff = (zb.states()[(k, i)] - z1.states()[(k, i)]).abs();
            let bound = (-cfg.rates()[i] * t).exp() * z0[i].abs() * (1.0 + 1e-9) + 1e-12;
            forget &= diff <= bound;
        }
    }
    ok &= check(forget, &mut d, "initial-condition gap within e^{-a t}".into());
    finish(ok, d)
}

fn sylvester_oracle() -> Outcome {
    let mut d = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_res = 0.0f64;
    let mut worst_ratio = f64::NEG_INFINITY;
    for trial in 0..20 {
        let alpha: f64 = rng.gen_range(0.05..0.5);
        let omega: f64 = rng.gen_range(0.5..2.0);
        let f = Matrix::from_rows(&[[-alpha, omega], [-omega, -alpha]]);
        let hm = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let obs = make_observer(2, 2, (1.0, 10.0), 500 + trial).unwrap();
        assert_eq!(obs.order(), 6);
        let syl = solve_sylvester(&f, &hm, &obs.state_matrix(), obs.input()).unwrap();
        worst_res = worst_res.max(syl.residual);

        // Exact plant solution x(t) = e^{−αt} R(ωt) x0.
        let a_min = obs.min_rate();
        let h = 1e-4;
        let n = (15.0 / a_min / h) as usize;
        let x0 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let times: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let xs = Matrix::from_fn(n, 2, |k, j| {
            let t = times[k];
            let (c, s) = ((omega * t).cos(), (omega * t).sin());
            let e = (-alpha * t).exp();
            if j == 0 {
                e * (c * x0[0] + s * x0[1])
            } else {
                e * (-s * x0[0] + c * x0[1])
            }
        });
        let y = xs.matmul_transpose(&hm).unwrap();
        let traj = Trajectory::new(times.clone(), xs).unwrap();
        let lifted = lift(&OutputSeries::new(times, y).unwrap(), &obs, None).unwrap();
        let fit = verify_linear_convergence(&traj, &lifted, &syl).unwrap();
        worst_ratio = worst_ratio.max(fit.slope / a_min);
    }
    let mut ok = check(worst_res <= 1e-10, &mut d, format!("max residual {worst_res:.1e}"));
    ok &= check(
        worst_ratio <= -0.9,
        &mut d,
        format!("max slope/a_min {worst_ratio:.3}"),
    );
    finish(ok, d)
}

fn pca_correctness() -> Outcome {
    let mut d = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut val_err, mut vec_err) = (0.0f64, 0.0f64);
    let (mut stat_err, mut trace_err, mut ortho_err, mut affine_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.gen_range(3..=50);
        let dim = rng.gen_range(2..=50);
        let z = Matrix::from_fn(n, dim, |_, j| rng.gen_range(-1.0..1.0) * (1.0 + j as f64 * 0.3) + j as f64);
        let w = fit_whiten(&z).unwrap();
        let k = (n - 1).min(w.retained.len());
        let m = fit_pca(&z, &w, k).unwrap();
        let zw = w.apply(&z).unwrap();
        for j in 0..zw.cols() {
            let col = zw.col(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            stat_err = stat_err.max(mean.abs()).max((var - 1.0).abs());
        }
        let total: f64 = m.spectrum.iter().sum();
        trace_err = trace_err.max((total - w.retained.len() as f64).abs() / w.retained.len() as f64);
        let gram = m.basis.gram();
        ortho_err = ortho_err.max(gram.sub(&Matrix::identity(k)).unwrap().max_abs());

        let cov = zw.gram().scale(1.0 / (n - 1) as f64);
        let eig = sym_eig(&cov).unwrap();
        let lmax = eig.values[0].max(1.0);
        for i in 0..k {
            val_err = val_err.max((eig.values[i] - m.eigenvalues[i]).abs());
            let gap_lo = if i > 0 { eig.values[i - 1] - eig.values[i] } else { f64::INFINITY };
            let gap_hi = eig.values.get(i + 1).map_or(f64::INFINITY, |v| eig.values[i] - v);
            if gap_lo.min(gap_hi) > 1e-4 * lmax && eig.values[i] > 1e-8 * lmax {
                let dot: f64 = (0..zw.cols()).map(|r| eig.vectors[(r, i)] * m.basis[(r, i)]).sum();
                vec_err = vec_err.max((dot.abs() - 1.0).abs());
            }
        }

        // Rescale one feature by c > 0, shift it, and compare projections.
        let f = rng.gen_range(0..dim);
        let (c, shift) = (rng.gen_range(0.1..10.0), rng.gen_range(-5.0..5.0));
        let mut z2 = z.clone();
        for i in 0..n {
            z2.row_mut(i)[f] = c * z[(i, f)] + shift;
        }
        let w2 = fit_whiten(&z2).unwrap();
        let m2 = fit_pca(&z2, &w2, k).unwrap();
        for i in 0..n {
            let a = project(&m, z.row(i)).unwrap();
            let b = project(&m2, z2.row(i)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                affine_err = affine_err.max((x - y).abs());
            }
        }
    }
    let mut ok = check(val_err <= 1e-8, &mut d, format!("eigenvalue err {val_err:.1e}"));
    ok &= check(vec_err <= 1e-8, &mut d, format!("eigenvector err {vec_err:.1e}"));
    ok &= check(stat_err <= 1e-10, &mut d, format!("whitened stats err {stat_err:.1e}"));
    ok &= check(trace_err <= 1e-8, &mut d, format!("trace err {trace_err:.1e}"));
    ok &= check(ortho_err <= 1e-10, &mut d, format!("orthonormality err {ortho_err:.1e}"));
    ok &= check(affine_err <= 1e-10, &mut d, format!("affine invariance err {affine_err:.1e}"));

    let z = Matrix::from_rows(&[[-1.0, -2.0], [0.0, 0.0], [1.0, 2.0]]);
    let w = fit_whiten(&z).unwrap();
    let m = fit_pca(&z, &w, 2).unwrap();
    let proj = project(&m, &[1.0, 2.0]).unwrap()[0];
    let hand = (m.eigenvalues[0] - 2.0).abs() <= 1e-12
        && m.eigenvalues[1].abs() <= 1e-12
        && (proj - 2f64.sqrt()).abs() <= 1e-12;
    ok &= check(hand, &mut d, format!("hand pair λ=({:.3},{:.1e}) π1={proj:.6}", m.eigenvalues[0], m.eigenvalues[1]));
    finish(ok, d)
}

fn recovery_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::synthetic(50, seed, seed);
    cfg.plots = false;
    cfg.write_intermediates = false;
    cfg
}

fn synthetic_recovery() -> Outcome {
    let mut d = Vec::new();
    let cfg = recovery_config(0);
    let out = run_pipeline(&cfg).unwrap();
    let mut ok = check(
        out.observer.order() == 200 && out.outputs.len() == 454,
        &mut d,
        format!("n_z {} N {}", out.observer.order(), out.outputs.len()),
    );
    let a = out.report.alignment.as_ref().unwrap();
    ok &= check(
        a.min_r_squared() >= 0.9,
        &mut d,
        format!("R² {:?}", a.r_squared.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()),
    );
    ok &= check(
        a.max_nrmse() <= 0.15,
        &mut d,
        format!("nRMSE {:?}", a.nrmse.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()),
    );
    let per = out.report.periods.unwrap();
    let rel = per.relative_error.unwrap_or(f64::INFINITY);
    ok &= check(
        rel <= 0.05,
        &mut d,
        format!(
            "period {:.3} vs {:.3} ({:.2}%)",
            per.recovered.period,
            per.truth.map_or(0.0, |t| t.period),
            rel * 100.0
        ),
    );
    finish(ok, d)
}

fn rendered_config(noise: f64, seed: u64) -> PipelineConfig {
    let mut cfg = recovery_config(seed);
    if let SourceConfig::OregonatorSynthetic { output_map, .. } = &mut cfg.source {
        *output_map = OutputMapConfig::RenderedFrames {
            width: 10,
            height: 10,
            noise,
            seed,
            color_map: Default::default(),
        };
    }
    cfg
}

fn full_scale() -> Outcome {
    let mut d = Vec::new();
    let out = run_pipeline(&rendered_config(0.0, 0)).unwrap();
    let mut ok = check(
        out.outputs.dim() == 300 && out.observer.order() == 1200 && out.outputs.len() == 454,
        &mut d,
        format!("p {} n_z {} frames {}", out.outputs.dim(), out.observer.order(), out.outputs.len()),
    );
    let s = &out.pca.model.spectrum;
    let ratio = s[2] / s[3];
    ok &= check(ratio >= 5.0, &mut d, format!("noiseless λ3/λ4 {ratio:.2}"));
    let noisy = run_pipeline(&rendered_config(0.02, 0)).unwrap();
    let sn = &noisy.pca.model.spectrum;
    d.push(format!("2% noise λ3/λ4 {:.2} (recorded)", sn[2] / sn[3]));
    finish(ok, d)
}

fn error_vs_window() -> Outcome {
    let mut d = Vec::new();
    let fractions = [0.25, 0.5, 1.0];
    let mut medians = Vec::new();
    let mut spreads = Vec::new();
    for f in fractions {
        let mut errs: Vec<f64> = (0..5u64)
            .map(|seed| {
                let mut cfg = recovery_config(seed);
                cfg.fit_fraction = f;
                run_pipeline(&cfg).unwrap().report.alignment.unwrap().max_nrmse()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        medians.push(errs[2]);
        spreads.push(errs[4] - errs[0]);
    }
    let ok = medians.windows(2).all(|w| w[1] <= w[0]);
    d.push(format!(
        "median max nRMSE at 25/50/100%: {:.5} / {:.5} / {:.5}",
        medians[0], medians[1], medians[2]
    ));
    d.push(format!(
        "seed spread {:.5} / {:.5} / {:.5}",
        spreads[0], spreads[1], spreads[2]
    ));
    finish(ok, d)
}

fn determinism() -> Outcome {
    let mut d = Vec::new();
    let mut cfg = rendered_config(0.02, 3);
    if let SourceConfig::OregonatorSynthetic { horizon, output_map, .. } = &mut cfg.source {
        *horizon = 15.0;
        if let OutputMapConfig::RenderedFrames { width, height, .. } = output_map {
            *width = 3;
            *height = 2;
        }
    }
    cfg.plots = true;
    cfg.write_intermediates = true;
    let a = render_artifacts(&run_pipeline(&cfg).unwrap(), &cfg).unwrap();
    let b = render_artifacts(&run_pipeline(&cfg).unwrap(), &cfg).unwrap();
    let mut ok = check(a == b, &mut d, format!("{} artifacts byte-identical", a.len()));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<u8> = (0..3 * 7 * 5).map(|_| rng.gen()).collect();
    let f = Frame::new(7, 5, data.clone()).unwrap();
    let bytes = encode_ppm(&f);
    let g = parse_ppm(&bytes, "mem").unwrap();
    ok &= check(g.data() == &data[..] && encode_ppm(&g) == bytes, &mut d, "PPM round trip".into());

    let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.1 + rng.gen_range(0.0..0.01)).collect();
    let values = Matrix::from_fn(50, 4, |_, j| {
        let mag = 10f64.powi(rng.gen_range(-300..300) / (j as i32 + 1));
        rng.gen_range(-1.0..1.0) * mag
    });
    let text = format_table("y", &times, &values);
    let (t2, v2) = parse_table(&text, "mem", "y").unwrap();
    let rel = values
        .as_slice()
        .iter()
        .zip(v2.as_slice())
        .chain(times.iter().zip(&t2))
        .map(|(a, b)| if *a == 0.0 { b.abs() } else { ((a - b) / a).abs() })
        .fold(0.0f64, f64::max);
    ok &= check(rel <= 1e-15, &mut d, format!("CSV round trip rel {rel:.1e}"));

    // Fitting twice on the same lifted data gives identical models.
    let lifted = LiftedSeries::new(
        times.clone(),
        Matrix::from_fn(50, 6, |k, j| (k as f64 * 0.3 + j as f64).sin()),
        1.0,
    )
    .unwrap();
    let opts = ReduceOptions { trim: Some(0.0), ..ReduceOptions::new(3) };
    let (r1, _) = reduce_series(&lifted, &opts).unwrap();
    let (r2, _) = reduce_series(&lifted, &opts).unwrap();
    ok &= check(r1.to_json().unwrap() == r2.to_json().unwrap(), &mut d, "PCA JSON identical".into());
    finish(ok, d)
}
