//! Acceptance gate: one pass/fail line per criterion. Runs for tens of
//! minutes on a single core.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};

use qsl_core::analysis::{default_baseline_window, field_spectrum, fit_beta_tau, gap_scaling_fit, linearity_check};
use qsl_core::dynamics::{mt_bound, populations, propagate, ControlField, QuantumState, TimeGrid};
use qsl_core::krotov::KrotovRecord;
use qsl_core::linalg::C64;
use qsl_core::model::SystemSpec;
use qsl_core::protocols::{staircase, sudden_switch_time, ProcessSpec};
use qsl_core::qsl::{qsl_scan_with, Probe, QslScanResult, RunConfigs, ScanConfig};

struct Scan {
    ts: f64,
    result: QslScanResult,
    probes: Vec<Probe>,
}

impl Scan {
    fn ratio(&self) -> f64 {
        self.result.t_qsl / self.ts
    }

    fn converged(&self) -> &KrotovRecord {
        self.result.converged.as_ref().expect("upper bracket converges")
    }
}

fn scan(spec: &SystemSpec, process: &ProcessSpec, lo: f64, hi: f64) -> Result<Scan, String> {
    let ts = sudden_switch_time(spec, process).map_err(|e| e.to_string())?;
    let cfg = ScanConfig {
        t_low: lo * ts,
        t_high: hi * ts,
        resolution: 0.01 * ts,
        pre_grid: 0,
    };
    let cfgs = RunConfigs {
        krotov: Default::default(),
        verdict: Default::default(),
        guess: Default::default(),
    };
    let clock = Instant::now();
    let mut probes = Vec::new();
    let result = qsl_scan_with(spec, process, &cfg, &cfgs, |p| probes.push(p.clone()))
        .map_err(|e| e.to_string())?;
    eprintln!(
        "  scan N={} gaps={:?} eps0={} {}->{}: T_QSL/T_S = {:.4} ± {:.4} ({} probes, {:.0} s)",
        spec.n_levels,
        spec.gaps,
        spec.spacing,
        process.initial_index,
        process.goal_index,
        result.t_qsl / ts,
        result.resolution / ts,
        probes.len(),
        clock.elapsed().as_secs_f64()
    );
    Ok(Scan { ts, result, probes })
}

fn three(db: f64, eps0: f64) -> SystemSpec {
    SystemSpec::three_level(1.0, db, eps0).unwrap()
}

type Outcome = Result<(bool, String), String>;

fn unitarity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let spec = SystemSpec::new(
            n,
            (0..n - 1).map(|_| rng.gen_range(0.1..3.0)).collect(),
            rng.gen_range(1.0..50.0),
        )
        .unwrap();
        let m = rng.gen_range(50..400);
        let values: Vec<f64> = (0..m).map(|_| rng.gen_range(-60.0..120.0)).collect();
        let field = ControlField::new(TimeGrid::new(rng.gen_range(1.0..20.0), m).unwrap(), values).unwrap();
        let raw: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi = QuantumState::new(raw.iter().map(|z| z / norm).collect()).unwrap();
        let traj = propagate(&spec, &field, &psi).map_err(|e| e.to_string())?;
        for s in &traj.states {
            worst = worst.max((s.norm() - 1.0).abs());
        }
    }
    Ok((worst < 1e-10, format!("max |‖ψ‖−1| = {worst:.2e} over 100 runs")))
}

fn rabi() -> Outcome {
    let gap = 1.0;
    let spec = SystemSpec::uniform(2, gap, 10.0).unwrap();
    let field = ControlField::constant(TimeGrid::new(PI / gap, 100).unwrap(), 0.0).unwrap();
    let traj = propagate(&spec, &field, &QuantumState::basis(2, 0).unwrap()).map_err(|e| e.to_string())?;
    let err = 1.0 - traj.final_state().populations()[1];
    Ok((err.abs() < 1e-8, format!("1 − P_1(π/Δ) = {err:.2e}")))
}

fn mt() -> Outcome {
    let spec = SystemSpec::uniform(2, 1.0, 10.0).unwrap();
    let t = mt_bound(
        &spec,
        0.0,
        &QuantumState::basis(2, 0).unwrap(),
        &QuantumState::basis(2, 1).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let err = (t - PI).abs();
    Ok((err < 1e-12, format!("T_MT = {t:.15}, |T_MT − π/Δ| = {err:.1e}")))
}

fn ok_line(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qsl"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn tree(dir: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeSet<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else if p.file_name().unwrap() != "manifest.json" {
                acc.insert(p.strip_prefix(root).unwrap().to_str().unwrap().to_string());
            }
        }
    }
    let mut acc = BTreeSet::new();
    walk(dir, dir, &mut acc);
    acc
}

fn identical(a: &Path, b: &Path) -> Result<usize, String> {
    let (ta, tb) = (tree(a), tree(b));
    if ta != tb {
        return Err(format!("file sets differ: {ta:?} vs {tb:?}"));
    }
    for f in &ta {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap() {
            return Err(format!("{f} differs"));
        }
    }
    Ok(ta.len())
}

fn reproducibility() -> Outcome {
    let dir = std::env::temp_dir().join(format!("qsl-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let opt = dir.join("opt.json");
    std::fs::write(
        &opt,
        r#"{"system": {"n_levels": 3, "gaps": [1, 1], "spacing": 10},
            "process": {"initial_index": 0, "goal_index": 2},
            "grid": {"duration_ratio": 0.95}}"#,
    )
    .unwrap();
    run_cli(&["optimize", "--config", &s(&opt), "--out", &s(&dir.join("a"))])?;
    run_cli(&["optimize", "--config", &s(&dir.join("a/manifest.json")), "--out", &s(&dir.join("b"))])?;
    let files = identical(&dir.join("a"), &dir.join("b"))?;

    let sweep = dir.join("sweep.json");
    std::fs::write(
        &sweep,
        r#"{"system": {"n_levels": 3, "gaps": [1, 1], "spacing": 5},
            "process": {"initial_index": 1, "goal_index": 0},
            "sweep": {"axis": {"eps0": [8, 5, 6]},
                      "bracket": {"t_low": 0.85, "t_high": 1.15, "resolution": 0.05}}}"#,
    )
    .unwrap();
    run_cli(&["sweep-eps0", "--config", &s(&sweep), "--out", &s(&dir.join("seq")), "--workers", "1"])?;
    run_cli(&["sweep-eps0", "--config", &s(&sweep), "--out", &s(&dir.join("par")), "--workers", "3"])?;
    let sweep_files = identical(&dir.join("seq"), &dir.join("par"))?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok((
        true,
        format!("manifest re-run: {files} files identical; sequential vs 3 workers: {sweep_files} files identical"),
    ))
}

fn switch_times(spec: &SystemSpec, process: &ProcessSpec, duration: f64) -> Vec<f64> {
    let segs = staircase(spec, process).unwrap();
    let ts: f64 = segs.iter().map(|s| s.duration).sum();
    let mut acc = 0.0;
    segs[..segs.len() - 1]
        .iter()
        .map(|s| {
            acc += s.duration;
            acc * duration / ts
        })
        .collect()
}

fn main() {
    let clock = Instant::now();
    let mut lines: Vec<(usize, bool, String)> = Vec::new();
    let mut record = |n: usize, title: &str, outcome: Outcome| {
        let (pass, detail) = match outcome {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let line = format!("[{}] criterion {n:>2} {title}: {detail}", ok_line(pass));
        eprintln!("{line}");
        lines.push((n, pass, line));
    };

    record(1, "unitarity", unitarity());
    record(2, "Rabi oracle", rabi());
    record(3, "Mandelstam-Tamm bound", mt());

    let p1 = ProcessSpec::single_crossing();
    let p2 = ProcessSpec::double_crossing();
    let mut all_probes: Vec<Probe> = Vec::new();
    let mut keep = |s: Result<Scan, String>| -> Result<Scan, String> {
        if let Ok(s) = &s {
            all_probes.extend(s.probes.iter().cloned());
        }
        s
    };

    // process I
    let proc1: Vec<(f64, Result<Scan, String>)> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&e| (e, keep(scan(&three(1.0, e), &p1, 0.9, 1.1))))
        .collect();
    record(5, "process I two-level limit", (|| {
        let mut pass = true;
        let mut parts = Vec::new();
        for (e, s) in &proc1 {
            let r = s.as_ref().map_err(|e| e.clone())?.ratio();
            pass &= (0.95..=1.05).contains(&r);
            parts.push(format!("ε0={e}: {r:.4}"));
        }
        Ok((pass, format!("T_QSL/(π/Δ_A) {}", parts.join(", "))))
    })());

    // process II across ε0
    let proc2: Vec<(f64, Result<Scan, String>)> = [5.0, 10.0, 20.0, 100.0]
        .iter()
        .map(|&e| (e, keep(scan(&three(1.0, e), &p2, 0.8, 1.0))))
        .collect();
    let at = |e: f64| proc2.iter().find(|(x, _)| *x == e).unwrap().1.as_ref();

    record(6, "process II headline speed-up", (|| {
        let s = at(10.0).map_err(|e| e.clone())?;
        let r = s.ratio();
        let rec = s.converged();
        let t_conv = rec.final_field.grid.duration / s.ts;
        let inf = rec.final_infidelity();
        let pass = (0.86..=0.96).contains(&r) && t_conv < 1.0 && inf <= 1e-4;
        Ok((
            pass,
            format!("T_QSL/T_S = {r:.4} ± {:.4}; converged run at {t_conv:.4}·T_S with I = {inf:.2e}", s.result.resolution / s.ts),
        ))
    })());

    record(7, "speed-up persists at ε0/Δ_A = 100", (|| {
        let s = at(100.0).map_err(|e| e.clone())?;
        let r = s.ratio();
        Ok((r <= 0.93, format!("T_QSL/T_S = {r:.4} ± {:.4}", s.result.resolution / s.ts)))
    })());

    record(8, "field spectroscopy", (|| {
        let mut freq = Vec::new();
        let mut amp = Vec::new();
        let mut pass = true;
        let mut parts = Vec::new();
        for e in [5.0, 10.0, 20.0] {
            let s = at(e).map_err(|e| e.clone())?;
            let spec = three(1.0, e);
            let field = &s.converged().final_field;
            let window = default_baseline_window(&spec, field.grid.dt());
            let sp = field_spectrum(field, window, &switch_times(&spec, &p2, field.grid.duration))
                .map_err(|e| e.to_string())?;
            let f = sp.dominant_frequency.ok_or("no oscillation found")?;
            let expect = e / (2.0 * PI);
            pass &= (f - expect).abs() <= sp.bin_width();
            parts.push(format!("ε0={e}: f={f:.3} (ε0/2π={expect:.3}, bin {:.3}), A={:.2}", sp.bin_width(), sp.max_amplitude));
            freq.push((e, f));
            amp.push((e, sp.max_amplitude));
        }
        let lf = linearity_check(&freq).map_err(|e| e.to_string())?;
        let la = linearity_check(&amp).map_err(|e| e.to_string())?;
        let slope_err = (lf.slope * 2.0 * PI - 1.0).abs();
        pass &= slope_err <= 0.05 && lf.r_squared >= 0.99 && la.r_squared >= 0.95;
        Ok((
            pass,
            format!(
                "{}; f slope·2π = {:.4}, r² = {:.4}; A_max r² = {:.4}",
                parts.join("; "),
                lf.slope * 2.0 * PI,
                lf.r_squared,
                la.r_squared
            ),
        ))
    })());

    let gaps: Vec<(f64, Result<Scan, String>)> = [0.5, 2.0]
        .iter()
        .map(|&db| (db, keep(scan(&three(db, 5.0), &p2, 0.8, 1.0))))
        .collect();
    record(9, "gap scaling", (|| {
        let mut pts = vec![(1.0, at(5.0).map_err(|e| e.clone())?.result.t_qsl)];
        for (db, s) in &gaps {
            pts.push((*db, s.as_ref().map_err(|e| e.clone())?.result.t_qsl));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fit = gap_scaling_fit(&pts, 1.0).map_err(|e| e.to_string())?;
        let worst = fit.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
        Ok((
            fit.beta < 1.0 && worst <= 0.05,
            format!("β = {:.4}, max |residual| = {worst:.4}", fit.beta),
        ))
    })());

    let ladders: Vec<(usize, Result<Scan, String>)> = [2usize, 4, 5, 6]
        .iter()
        .map(|&n| {
            let lo = if n == 2 { 0.8 } else { 0.7 };
            let hi = if n == 2 { 1.1 } else { 1.0 };
            (n, keep(scan(&SystemSpec::uniform(n, 1.0, 10.0).unwrap(), &ProcessSpec::full_ladder(n), lo, hi)))
        })
        .collect();
    record(10, "N scaling", (|| {
        let mut pts: Vec<(usize, f64, f64)> = Vec::new();
        for (n, s) in &ladders {
            let s = s.as_ref().map_err(|e| e.clone())?;
            pts.push((*n, s.result.t_qsl, s.ratio()));
        }
        let s3 = at(10.0).map_err(|e| e.clone())?;
        pts.push((3, s3.result.t_qsl, s3.ratio()));
        pts.sort_by_key(|p| p.0);
        let fit = fit_beta_tau(&pts.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(), 1.0)
            .map_err(|e| e.to_string())?;
        let monotone = pts.windows(2).all(|w| w[1].2 <= w[0].2 + 0.02);
        let worst = fit.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
        let beta2 = fit.beta_curve[0].1;
        let pass = beta2 == 1.0 && monotone && worst <= 0.03 && fit.tau > 0.0;
        let ratios: Vec<String> = pts.iter().map(|p| format!("{}:{:.4}", p.0, p.2)).collect();
        Ok((
            pass,
            format!(
                "T_QSL/T_S by N [{}]; τ = {:.4}, fitted β(2) = {beta2}, max |residual| = {worst:.4}",
                ratios.join(" "),
                fit.tau
            ),
        ))
    })());

    record(11, "three-state occupation before the switch", (|| {
        let s = at(10.0).map_err(|e| e.clone())?;
        let spec = three(1.0, 10.0);
        let field = &s.converged().final_field;
        let traj = propagate(&spec, field, &p2.initial_state(&spec).unwrap()).map_err(|e| e.to_string())?;
        let switch = switch_times(&spec, &p2, field.grid.duration)[0];
        let best = field
            .grid
            .times()
            .iter()
            .zip(populations(&traj))
            .filter(|(t, _)| **t < switch)
            .map(|(t, p)| (p.iter().cloned().fold(f64::INFINITY, f64::min), *t))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .ok_or("no samples before the switch")?;
        Ok((
            best.0 > 0.05,
            format!("max_t min_k P_k = {:.3} at t = {:.3} (switch at {switch:.3})", best.0, best.1),
        ))
    })());

    let rise = all_probes
        .iter()
        .map(|p| p.max_rise)
        .fold(f64::NEG_INFINITY, f64::max);
    let iterations: usize = all_probes.iter().map(|p| p.iterations).sum();
    record(4, "Krotov monotonicity", Ok((
        rise <= 1e-9 && !all_probes.is_empty(),
        format!("max I_(k+1) − I_k = {rise:.2e} over {} runs, {iterations} iterations", all_probes.len()),
    )));

    record(12, "reproducibility", reproducibility());

    lines.sort_by_key(|l| l.0);
    println!("\nacceptance summary ({:.0} s)", clock.elapsed().as_secs_f64());
    for (_, _, line) in &lines {
        println!("{line}");
    }
    let failed = lines.iter().filter(|l| !l.1).count();
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
