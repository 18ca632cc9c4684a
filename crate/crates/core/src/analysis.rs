//! Post-processing of optimized fields and QSL tables: staircase baseline,
//! oscillation spectrum, and least-squares fits of the speed-up laws.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::ControlField;
use crate::error::{QslError, Result};
use crate::model::SystemSpec;

/// Centered moving average. The window shrinks symmetrically near the ends
/// so every sample stays centered.
pub fn extract_baseline(field: &ControlField, window: usize) -> Result<ControlField> {
    check_window(field, window)?;
    let v = &field.values;
    let m = v.len();
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    for x in v {
        prefix.push(prefix.last().unwrap() + x);
    }
    let half = window / 2;
    let values = (0..m)
        .map(|j| {
            let h = half.min(j).min(m - 1 - j);
            (prefix[j + h + 1] - prefix[j - h]) / (2 * h + 1) as f64
        })
        .collect();
    ControlField::new(field.grid, values)
}

fn check_window(field: &ControlField, window: usize) -> Result<()> {
    if window < 3 || window % 2 == 0 {
        return Err(QslError::InvalidParameter(format!(
            "baseline window must be odd and at least 3, got {window}"
        )));
    }
    if window > field.values.len() / 2 {
        return Err(QslError::InvalidParameter(format!(
            "baseline window {window} exceeds half the record ({} samples)",
            field.values.len()
        )));
    }
    Ok(())
}

/// Odd window spanning one period of `ε0/2π` on a grid of step `dt`.
pub fn default_baseline_window(spec: &SystemSpec, dt: f64) -> usize {
    let period = 2.0 * PI / spec.spacing;
    let w = (period / dt).round() as usize;
    (w | 1).max(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpectrum {
    /// One-sided bin frequencies, cycles per unit time.
    pub frequencies: Vec<f64>,
    /// Taper-corrected amplitudes: a sinusoid of amplitude `A` peaks near `A`.
    pub amplitudes: Vec<f64>,
    /// Strongest non-DC bin; `None` when the residual vanishes.
    pub dominant_frequency: Option<f64>,
    /// `max |field − baseline|`.
    pub max_amplitude: f64,
}

impl FieldSpectrum {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(f64::NAN)
    }
}

/// Hann window `w_j = sin²(π j / M)`.
pub fn hann(m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| (PI * j as f64 / m as f64).sin().powi(2))
        .collect()
}

/// Spectrum of the oscillation riding on the staircase.
///
/// Subtracts the moving-average baseline, then transforms each plateau
/// between `switch_times` separately (Hann taper, zero-padded to the full
/// record so bins sit at `1/T`) and averages the normalized power. Half a
/// window on either side of each switch is dropped: the moving average
/// cannot follow the step there. Averaging power per plateau keeps a phase
/// jump of the oscillation at a switch from cancelling the fundamental.
/// With no switch times the whole record is one plateau.
pub fn field_spectrum(
    field: &ControlField,
    window: usize,
    switch_times: &[f64],
) -> Result<FieldSpectrum> {
    let baseline = extract_baseline(field, window)?;
    let residual: Vec<f64> = field
        .values
        .iter()
        .zip(&baseline.values)
        .map(|(f, b)| f - b)
        .collect();
    let dt = field.grid.dt();
    let m = residual.len();
    let margin = if switch_times.is_empty() { 0 } else { window / 2 };
    let mut cuts: Vec<usize> = switch_times
        .iter()
        .map(|t| ((t / dt).round().max(0.0) as usize).min(m))
        .collect();
    cuts.sort_unstable();
    let mut segments = Vec::new();
    let mut start = 0;
    for &c in cuts.iter().chain(std::iter::once(&m)) {
        let a = if start == 0 { 0 } else { start + margin };
        let b = if c == m { m } else { c.saturating_sub(margin) };
        if b > a + 8 {
            segments.push((a, b));
        }
        start = c;
    }
    if segments.is_empty() {
        return Err(QslError::InvalidParameter(
            "no plateau long enough for a spectrum".into(),
        ));
    }
    Ok(residual_spectrum(&residual, dt, &segments, field_scale(field)))
}

fn field_scale(field: &ControlField) -> f64 {
    field.values.iter().map(|v| v.abs()).fold(1.0, f64::max)
}

/// Amplitude spectrum of a detrended signal sampled every `dt`, averaging
/// taper-normalized power over `segments` (`[start, end)` sample ranges).
/// A steady sinusoid of amplitude `A` peaks near `A`. `max_amplitude` is
/// taken over the whole record.
pub fn residual_spectrum(
    residual: &[f64],
    dt: f64,
    segments: &[(usize, usize)],
    scale: f64,
) -> FieldSpectrum {
    let m = residual.len();
    let max_amplitude = residual.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let power = segment_power(residual, segments);

    let bins = m / 2 + 1;
    let df = 1.0 / (m as f64 * dt);
    let frequencies = (0..bins).map(|k| k as f64 * df).collect();
    let amplitudes: Vec<f64> = power[..bins]
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (m % 2 == 0 && k == m / 2) { 1.0 } else { 2.0 };
            one_sided * p.sqrt()
        })
        .collect();

    if max_amplitude <= 1e-12 * scale {
        return FieldSpectrum {
            frequencies,
            amplitudes,
            dominant_frequency: None,
            max_amplitude: 0.0,
        };
    }
    let peak = amplitudes
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k);
    FieldSpectrum {
        frequencies,
        dominant_frequency: peak.map(|k| k as f64 * df),
        amplitudes,
        max_amplitude,
    }
}

/// Mean over segments of `|X_k|² / (Σ w)²`, each segment Hann-tapered and
/// zero-padded to the record length (all `m` bins).
pub fn segment_power(residual: &[f64], segments: &[(usize, usize)]) -> Vec<f64> {
    let m = residual.len();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut power = vec![0.0; m];
    for &(a, b) in segments {
        let taper = hann(b - a);
        let gain: f64 = taper.iter().sum();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (i, w) in taper.iter().enumerate() {
            buf[i].re = residual[a + i] * w;
        }
        fft.process(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p += z.norm_sqr() / (gain * gain * segments.len() as f64);
        }
    }
    power
}

/// Time-domain counterpart of [`segment_power`]: by Parseval,
/// `Σ_k P_k = m · segment_energy`.
pub fn segment_energy(residual: &[f64], segments: &[(usize, usize)]) -> f64 {
    segments
        .iter()
        .map(|&(a, b)| {
            let taper = hann(b - a);
            let gain: f64 = taper.iter().sum();
            taper
                .iter()
                .enumerate()
                .map(|(i, w)| (residual[a + i] * w).powi(2))
                .sum::<f64>()
                / (gain * gain)
        })
        .sum::<f64>()
        / segments.len() as f64
}

/// Fit of `T_QSL(N) = (N−1)π/Δ − (N−2)τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupFit {
    pub tau: f64,
    /// `(N, β(N))` with `β = 1 − (N−2)/(N−1) · τΔ/π`, one per distinct `N`.
    pub beta_curve: Vec<(usize, f64)>,
    /// `(t_qsl − model) / T_S^(N−1)` per input point.
    pub residuals: Vec<f64>,
    /// Set when `τ < 0`, i.e. the data show no speed-up.
    pub speedup_absent: bool,
}

/// `β(N)` implied by a given `τ`.
pub fn beta_of(n: usize, tau: f64, gap: f64) -> f64 {
    let n = n as f64;
    1.0 - (n - 2.0) / (n - 1.0) * tau * gap / PI
}

pub fn fit_beta_tau(points: &[(usize, f64)], gap: f64) -> Result<SpeedupFit> {
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(QslError::InvalidParameter(format!(
            "gap must be positive, got {gap}"
        )));
    }
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 || ns[0] < 2 {
        return Err(QslError::InvalidParameter(
            "need at least three distinct N ≥ 2".into(),
        ));
    }
    let t_s = |n: usize| (n as f64 - 1.0) * PI / gap;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(n, t)| {
        let x = n as f64 - 2.0;
        (num + x * (t_s(n) - t), den + x * x)
    });
    let tau = num / den;
    let residuals = points
        .iter()
        .map(|&(n, t)| (t - (t_s(n) - (n as f64 - 2.0) * tau)) / t_s(n))
        .collect();
    Ok(SpeedupFit {
        tau,
        beta_curve: ns.iter().map(|&n| (n, beta_of(n, tau, gap))).collect(),
        residuals,
        speedup_absent: tau < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub beta: f64,
    /// `(t_qsl − β·T_S) / (β·T_S)`.
    pub residuals: Vec<f64>,
}

/// Least-squares `β` in `t_qsl = β (π/Δ_A + π/Δ_B)`.
pub fn gap_scaling_fit(points: &[(f64, f64)], delta_a: f64) -> Result<GapFit> {
    if points.len() < 3 {
        return Err(QslError::InvalidParameter(
            "gap scaling fit needs at least three points".into(),
        ));
    }
    if !(delta_a > 0.0) || points.iter().any(|&(d, t)| !(d > 0.0 && t > 0.0)) {
        return Err(QslError::InvalidParameter(
            "gaps and times must be positive".into(),
        ));
    }
    let t_s = |db: f64| PI / delta_a + PI / db;
    let (num, den) = points
        .iter()
        .fold((0.0, 0.0), |(n, d), &(db, t)| (n + t * t_s(db), d + t_s(db).powi(2)));
    let beta = num / den;
    let residuals = points
        .iter()
        .map(|&(db, t)| (t - beta * t_s(db)) / (beta * t_s(db)))
        .collect();
    Ok(GapFit { beta, residuals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line with coefficient of determination.
pub fn linearity_check(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(QslError::InvalidParameter(
            "line fit needs at least three points".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(QslError::InvalidParameter(
            "line fit needs at least two distinct abscissae".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
