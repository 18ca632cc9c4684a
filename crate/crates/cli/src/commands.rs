use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use qsl_core::analysis::{
    default_baseline_window, field_spectrum, fit_beta_tau, gap_scaling_fit, linearity_check,
};
use qsl_core::dynamics::{infidelity, propagate as evolve, ControlField, TimeGrid};
use qsl_core::io::{
    fmt_num, read_field, write_csv_file, write_eigen_spectrum, write_field, write_field_spectrum,
    write_populations,
};
use qsl_core::krotov::optimize as krotov_optimize;
use qsl_core::model::SystemSpec;
use qsl_core::protocols::{
    initial_guess, staircase, sudden_switch, sudden_switch_time, ProcessSpec,
};
use qsl_core::qsl::{qsl_scan_with, QslScanResult};

use crate::config::{ExperimentConfig, SweepAxis};
use crate::{CliError, Run};

pub fn spectrum(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let spec = &cfg.system;
    let range = cfg.spectrum.unwrap_or(crate::config::SpectrumRange {
        lambda_min: -spec.spacing,
        lambda_max: (spec.n_levels - 1) as f64 * spec.spacing,
        points: 801,
    });
    if range.points < 2 || !(range.lambda_max > range.lambda_min) {
        return Err(CliError::config("spectrum needs lambda_min < lambda_max and points ≥ 2"));
    }
    let step = (range.lambda_max - range.lambda_min) / (range.points - 1) as f64;
    let lambdas: Vec<f64> = (0..range.points)
        .map(|i| range.lambda_min + i as f64 * step)
        .collect();
    let path = run.output("eigen_spectrum.csv")?;
    write_eigen_spectrum(&path, spec, &lambdas)?;
    Ok(())
}

fn grid_for(cfg: &ExperimentConfig) -> Result<Option<TimeGrid>, CliError> {
    Ok(match cfg.duration()? {
        None => None,
        Some((t, Some(n))) => Some(TimeGrid::new(t, n)?),
        Some((t, None)) => Some(TimeGrid::with_default_density(&cfg.system, t)?),
    })
}

pub fn propagate(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let spec = &cfg.system;
    let process = cfg.process()?;
    let (field, source) = match cfg.analysis.as_ref().and_then(|a| a.field_csv.as_ref()) {
        Some(p) => (read_field(&run.input(p))?, "file"),
        None => match grid_for(cfg)? {
            Some(grid) => (initial_guess(spec, &process, grid, &cfg.guess)?, "initial_guess"),
            None => (sudden_switch(spec, &process, None)?.field, "sudden_switch"),
        },
    };
    let traj = evolve(spec, &field, &process.initial_state(spec)?)?;
    let inf = infidelity(traj.final_state(), &process.goal_state(spec)?)?;
    let path = run.output("field.csv")?;
    write_field(&path, &field)?;
    let path = run.output("populations.csv")?;
    write_populations(&path, &traj)?;
    run.write_json(
        "summary.json",
        &json!({
            "field_source": source,
            "duration": field.grid.duration,
            "n_steps": field.grid.n_steps,
            "final_infidelity": inf,
            "final_populations": traj.final_state().populations(),
        }),
    )
}

pub fn optimize(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let spec = &cfg.system;
    let process = cfg.process()?;
    let grid = grid_for(cfg)?.ok_or_else(|| CliError::config("optimize needs a `grid` block"))?;
    let guess = initial_guess(spec, &process, grid, &cfg.guess)?;
    let clock = Instant::now();
    let record = krotov_optimize(spec, &process, grid, &guess, &cfg.krotov)?;
    run.durations
        .insert("optimize".into(), clock.elapsed().as_secs_f64());
    run.log(|| {
        format!(
            "{} iterations, final infidelity {:.3e}",
            record.iterations_run,
            record.final_infidelity()
        )
    });
    let traj = evolve(spec, &record.final_field, &process.initial_state(spec)?)?;
    let ts = sudden_switch_time(spec, &process)?;

    let path = run.output("guess_field.csv")?;
    write_field(&path, &guess)?;
    let path = run.output("field.csv")?;
    write_field(&path, &record.final_field)?;
    let path = run.output("populations.csv")?;
    write_populations(&path, &traj)?;
    run.write_json(
        "record.json",
        &json!({
            "duration": grid.duration,
            "n_steps": grid.n_steps,
            "sudden_switch_time": ts,
            "duration_ratio": grid.duration / ts,
            "iterations_run": record.iterations_run,
            "terminated_by": record.terminated_by,
            "final_infidelity": record.final_infidelity(),
            "final_step_weight": record.final_step_weight,
            "infidelity_history": record.infidelity_history,
        }),
    )
}

fn probe_rows(result: &QslScanResult, ts: f64) -> Vec<Vec<String>> {
    result
        .probed_times
        .iter()
        .zip(&result.verdicts)
        .zip(&result.final_infidelities)
        .map(|((&t, v), &i)| {
            vec![
                fmt_num(t),
                fmt_num(t / ts),
                format!("{v:?}").to_lowercase(),
                fmt_num(i),
            ]
        })
        .collect()
}

const PROBE_HEADER: [&str; 4] = ["duration", "ratio", "verdict", "final_infidelity"];

const RESULT_HEADER: [&str; 10] = [
    "status",
    "n_levels",
    "eps0",
    "delta_b",
    "process",
    "sudden_switch_time",
    "t_qsl",
    "ratio",
    "resolution",
    "error",
];

/// One results-table row (without the sweep column).
fn result_row(
    spec: Option<(&SystemSpec, &ProcessSpec)>,
    outcome: Result<(&QslScanResult, f64), &CliError>,
) -> Vec<String> {
    let mut row = vec![if outcome.is_ok() { "ok" } else { "failed" }.to_string()];
    match spec {
        Some((s, p)) => row.extend([
            s.n_levels.to_string(),
            fmt_num(s.spacing),
            s.gaps.get(1).map_or(String::new(), |&g| fmt_num(g)),
            format!("{}->{}", p.initial_index, p.goal_index),
        ]),
        None => row.extend(std::iter::repeat(String::new()).take(4)),
    }
    match outcome {
        Ok((r, ts)) => row.extend([
            fmt_num(ts),
            fmt_num(r.t_qsl),
            fmt_num(r.t_qsl / ts),
            fmt_num(r.resolution),
            String::new(),
        ]),
        Err(e) => {
            row.extend(std::iter::repeat(String::new()).take(4));
            row.push(format!("{}: {}", e.kind, e.message));
        }
    }
    row
}

#[derive(Serialize)]
struct ScanSummary {
    sudden_switch_time: f64,
    t_qsl: f64,
    ratio: f64,
    resolution: f64,
    converged_duration: Option<f64>,
    converged_infidelity: Option<f64>,
}

fn summarize(result: &QslScanResult, ts: f64) -> ScanSummary {
    ScanSummary {
        sudden_switch_time: ts,
        t_qsl: result.t_qsl,
        ratio: result.t_qsl / ts,
        resolution: result.resolution,
        converged_duration: result.converged.as_ref().map(|r| r.final_field.grid.duration),
        converged_infidelity: result.converged.as_ref().map(|r| r.final_infidelity()),
    }
}

pub fn qsl_scan(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let spec = &cfg.system;
    let process = cfg.process()?;
    let bracket = cfg
        .scan
        .ok_or_else(|| CliError::config("qsl-scan needs a `scan` block"))?;
    let ts = sudden_switch_time(spec, &process)?;
    let clock = Instant::now();
    let verbose = run.verbose;
    let result = qsl_scan_with(spec, &process, &bracket.absolute(ts), &cfg.run_configs(), |p| {
        if verbose {
            eprintln!(
                "T/T_S = {:.4}: {:?} (I = {:.3e}, {} iterations)",
                p.duration / ts,
                p.verdict,
                p.final_infidelity,
                p.iterations
            );
        }
    })?;
    run.durations
        .insert("scan".into(), clock.elapsed().as_secs_f64());
    let path = run.output("probes.csv")?;
    write_csv_file(&path, &PROBE_HEADER, &probe_rows(&result, ts))?;
    let path = run.output("results.csv")?;
    write_csv_file(
        &path,
        &RESULT_HEADER,
        &[result_row(Some((spec, &process)), Ok((&result, ts)))],
    )?;
    if let Some(rec) = &result.converged {
        let path = run.output("converged_field.csv")?;
        write_field(&path, &rec.final_field)?;
    }
    run.write_json("scan.json", &summarize(&result, ts))
}

/// Staircase switch instants rescaled to a protocol of length `duration`.
pub fn switch_times(
    spec: &SystemSpec,
    process: &ProcessSpec,
    duration: f64,
) -> Result<Vec<f64>, CliError> {
    let segs = staircase(spec, process)?;
    let ts: f64 = segs.iter().map(|s| s.duration).sum();
    let mut acc = 0.0;
    Ok(segs[..segs.len() - 1]
        .iter()
        .map(|s| {
            acc += s.duration;
            acc * duration / ts
        })
        .collect())
}

struct PointOutcome {
    value: f64,
    spec: SystemSpec,
    process: ProcessSpec,
    result: Result<QslScanResult, CliError>,
    seconds: f64,
}

fn sweep_point(cfg: &ExperimentConfig, axis: &SweepAxis, value: f64) -> Result<(SystemSpec, ProcessSpec), CliError> {
    let base = &cfg.system;
    let (spec, process) = match axis {
        SweepAxis::Eps0(_) => {
            let spec = SystemSpec::new(base.n_levels, base.gaps.clone(), value)?;
            let p = cfg.process()?;
            (spec, p)
        }
        SweepAxis::DeltaB(_) => {
            if base.n_levels != 3 {
                return Err(CliError::config("delta_b sweeps need a three-level system"));
            }
            let spec = SystemSpec::three_level(base.gaps[0], value, base.spacing)?;
            (spec, cfg.process()?)
        }
        SweepAxis::N(_) => {
            let n = value as usize;
            let spec = SystemSpec::uniform(n, base.gaps[0], base.spacing)?;
            (spec, ProcessSpec::full_ladder(n))
        }
    };
    process.validate(&spec)?;
    Ok((spec, process))
}

pub fn sweep(cfg: &ExperimentConfig, run: &mut Run, axis_name: &str) -> Result<(), CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep commands need a `sweep` block"))?;
    if sweep.axis.name() != axis_name {
        return Err(CliError::config(format!(
            "sweep axis is `{}`, this command sweeps `{axis_name}`",
            sweep.axis.name()
        )));
    }
    if matches!(sweep.axis, SweepAxis::N(_)) && cfg.process.is_some() {
        return Err(CliError::config("n sweeps always run the full ladder; drop `process`"));
    }
    let mut values = sweep.axis.values();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::config("sweep values must be finite"));
    }
    values.sort_by(f64::total_cmp);
    let cfgs = cfg.run_configs();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.workers)
        .build()
        .map_err(|e| CliError::config(e.to_string()))?;
    let verbose = run.verbose;
    let outcomes: Vec<Result<PointOutcome, CliError>> = pool.install(|| {
        values
            .par_iter()
            .map(|&value| {
                let (spec, process) = sweep_point(cfg, &sweep.axis, value)?;
                let ts = sudden_switch_time(&spec, &process)?;
                let clock = Instant::now();
                let result = qsl_scan_with(
                    &spec,
                    &process,
                    &sweep.bracket.absolute(ts),
                    &cfgs,
                    |_| {},
                )
                .map_err(CliError::from);
                if verbose {
                    match &result {
                        Ok(r) => eprintln!("{axis_name} = {value}: T_QSL/T_S = {:.4}", r.t_qsl / ts),
                        Err(e) => eprintln!("{axis_name} = {value}: failed ({})", e.message),
                    }
                }
                Ok(PointOutcome {
                    value,
                    spec,
                    process,
                    result,
                    seconds: clock.elapsed().as_secs_f64(),
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (idx, (value, outcome)) in values.iter().zip(outcomes).enumerate() {
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                rows.push(with_value(*value, result_row(None, Err(&e))));
                continue;
            }
        };
        run.durations
            .insert(format!("point_{idx:02}"), outcome.seconds);
        let ts = sudden_switch_time(&outcome.spec, &outcome.process)?;
        match &outcome.result {
            Ok(r) => {
                rows.push(with_value(
                    *value,
                    result_row(Some((&outcome.spec, &outcome.process)), Ok((r, ts))),
                ));
                let path = run.output(&format!("probes/{axis_name}_{idx:02}.csv"))?;
                write_csv_file(&path, &PROBE_HEADER, &probe_rows(r, ts))?;
                if let Some(rec) = &r.converged {
                    let path = run.output(&format!("fields/{axis_name}_{idx:02}.csv"))?;
                    write_field(&path, &rec.final_field)?;
                }
                points.push((outcome.value, ts, r.clone(), outcome.spec, outcome.process));
            }
            Err(e) => rows.push(with_value(
                *value,
                result_row(Some((&outcome.spec, &outcome.process)), Err(e)),
            )),
        }
    }
    let path = run.output("results.csv")?;
    let header: Vec<&str> = std::iter::once(axis_name).chain(RESULT_HEADER).collect();
    write_csv_file(&path, &header, &rows)?;
    let fit = sweep_fit(cfg, &sweep.axis, &points);
    run.write_json("fit.json", &fit)
}

fn with_value(value: f64, row: Vec<String>) -> Vec<String> {
    std::iter::once(fmt_num(value)).chain(row).collect()
}

type Point = (f64, f64, QslScanResult, SystemSpec, ProcessSpec);

fn fit_error(e: impl std::fmt::Display) -> serde_json::Value {
    json!({ "error": e.to_string() })
}

fn sweep_fit(cfg: &ExperimentConfig, axis: &SweepAxis, points: &[Point]) -> serde_json::Value {
    match axis {
        SweepAxis::N(_) => {
            let data: Vec<(usize, f64)> =
                points.iter().map(|p| (p.0 as usize, p.2.t_qsl)).collect();
            match fit_beta_tau(&data, cfg.system.gaps[0]) {
                Ok(f) => json!({
                    "model": "t_qsl = (N-1)*pi/gap - (N-2)*tau",
                    "tau": f.tau,
                    "speedup_absent": f.speedup_absent,
                    "beta_fitted": f.beta_curve,
                    "beta_measured": points.iter().map(|p| (p.0 as usize, p.2.t_qsl / p.1)).collect::<Vec<_>>(),
                    "residuals": f.residuals,
                }),
                Err(e) => fit_error(e),
            }
        }
        SweepAxis::DeltaB(_) => {
            let data: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.2.t_qsl)).collect();
            match gap_scaling_fit(&data, cfg.system.gaps[0]) {
                Ok(f) => json!({
                    "model": "t_qsl = beta*(pi/delta_a + pi/delta_b)",
                    "beta": f.beta,
                    "residuals": f.residuals,
                }),
                Err(e) => fit_error(e),
            }
        }
        SweepAxis::Eps0(_) => {
            let mut spectra = Vec::new();
            for (eps0, _, r, spec, process) in points {
                let Some(rec) = &r.converged else { continue };
                let field: &ControlField = &rec.final_field;
                let window = default_baseline_window(spec, field.grid.dt());
                let switches = match switch_times(spec, process, field.grid.duration) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if let Ok(sp) = field_spectrum(field, window, &switches) {
                    spectra.push((*eps0, sp.dominant_frequency, sp.max_amplitude, sp.bin_width()));
                }
            }
            let freq: Vec<(f64, f64)> = spectra
                .iter()
                .filter_map(|s| s.1.map(|f| (s.0, f)))
                .collect();
            let amp: Vec<(f64, f64)> = spectra.iter().map(|s| (s.0, s.2)).collect();
            let line = |pts: &[(f64, f64)]| match linearity_check(pts) {
                Ok(l) => json!({"slope": l.slope, "intercept": l.intercept, "r_squared": l.r_squared}),
                Err(e) => fit_error(e),
            };
            json!({
                "ratios": points.iter().map(|p| (p.0, p.2.t_qsl / p.1)).collect::<Vec<_>>(),
                "oscillations": spectra.iter().map(|s| json!({
                    "eps0": s.0,
                    "dominant_frequency": s.1,
                    "max_amplitude": s.2,
                    "bin_width": s.3,
                })).collect::<Vec<_>>(),
                "frequency_fit": line(&freq),
                "amplitude_fit": line(&amp),
                "expected_frequency_slope": 1.0 / (2.0 * PI),
            })
        }
    }
}

pub fn analyze_field(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let analysis = cfg.analysis.clone().unwrap_or_default();
    let path = analysis
        .field_csv
        .as_ref()
        .ok_or_else(|| CliError::config("analyze-field needs `analysis.field_csv`"))?;
    let field = read_field(&run.input(path))?;
    let window = analysis
        .window
        .unwrap_or_else(|| default_baseline_window(&cfg.system, field.grid.dt()));
    let switches = match analysis.switch_times {
        Some(s) => s,
        None => switch_times(&cfg.system, &cfg.process()?, field.grid.duration)?,
    };
    let sp = field_spectrum(&field, window, &switches)?;
    let path = run.output("field_spectrum.csv")?;
    write_field_spectrum(&path, &sp)?;
    run.write_json(
        "summary.json",
        &json!({
            "dominant_frequency": sp.dominant_frequency,
            "max_amplitude": sp.max_amplitude,
            "bin_width": sp.bin_width(),
            "window": window,
            "switch_times": switches,
        }),
    )
}
