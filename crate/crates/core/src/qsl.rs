//! Heuristic quantum-speed-limit search.
//!
//! A fixed-`T` optimization is classed as *converging* when it reaches the
//! success threshold, or when its smoothed infidelity history is still
//! bending downward (negative mean second difference) over the tail.
//! Otherwise it has *stalled*. The QSL time is the boundary between the two,
//! located by bisection on `T`.

use serde::{Deserialize, Serialize};

use crate::dynamics::TimeGrid;
use crate::error::{QslError, Result};
use crate::krotov::{optimize, KrotovConfig, KrotovRecord};
use crate::model::SystemSpec;
use crate::protocols::{initial_guess, GuessConfig, ProcessSpec};

/// Minimum number of history entries in the analyzed tail.
pub const MIN_TAIL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerdictConfig {
    pub tail_fraction: f64,
    pub smoothing_window: usize,
    pub curvature_tolerance: f64,
    pub success_infidelity: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            tail_fraction: 0.25,
            smoothing_window: 21,
            curvature_tolerance: 1e-12,
            success_infidelity: 1e-4,
        }
    }
}

impl VerdictConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(QslError::InvalidParameter(format!(
                "tail fraction must lie in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        if self.smoothing_window < 3 || self.smoothing_window % 2 == 0 {
            return Err(QslError::InvalidParameter(format!(
                "smoothing window must be odd and at least 3, got {}",
                self.smoothing_window
            )));
        }
        if !(self.curvature_tolerance >= 0.0 && self.success_infidelity >= 0.0) {
            return Err(QslError::InvalidParameter(
                "tolerances must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Shortest history the curvature test accepts.
    pub fn min_history(&self) -> usize {
        let by_window = (2.0 * self.smoothing_window as f64 / self.tail_fraction).ceil() as usize;
        let by_tail = (MIN_TAIL as f64 / self.tail_fraction).ceil() as usize;
        by_window.max(by_tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converging,
    Stalled,
}

pub fn convergence_verdict(record: &KrotovRecord, cfg: &VerdictConfig) -> Result<Verdict> {
    history_verdict(&record.infidelity_history, cfg)
}

/// Verdict on a bare infidelity history `I_0, I_1, …`.
pub fn history_verdict(history: &[f64], cfg: &VerdictConfig) -> Result<Verdict> {
    cfg.validate()?;
    if history
        .iter()
        .any(|&i| i <= cfg.success_infidelity)
    {
        return Ok(Verdict::Converging);
    }
    let required = cfg.min_history();
    if history.len() < required {
        return Err(QslError::HistoryTooShort {
            len: history.len(),
            required,
        });
    }
    if tail_curvature(history, cfg) < -cfg.curvature_tolerance {
        Ok(Verdict::Converging)
    } else {
        Ok(Verdict::Stalled)
    }
}

/// Mean second difference of the moving-averaged tail.
pub fn tail_curvature(history: &[f64], cfg: &VerdictConfig) -> f64 {
    let tail_len = ((cfg.tail_fraction * history.len() as f64).ceil() as usize).min(history.len());
    let tail = &history[history.len() - tail_len..];
    let w = cfg.smoothing_window;
    let smoothed: Vec<f64> = tail.windows(w).map(|s| s.iter().sum::<f64>() / w as f64).collect();
    if smoothed.len() < 3 {
        return 0.0;
    }
    let second: Vec<f64> = smoothed
        .windows(3)
        .map(|s| s[2] - 2.0 * s[1] + s[0])
        .collect();
    second.iter().sum::<f64>() / second.len() as f64
}

/// Outcome of one optimization at fixed `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub duration: f64,
    pub verdict: Verdict,
    pub final_infidelity: f64,
    pub iterations: usize,
    /// Largest `I_{k+1} − I_k` in the run; non-positive when monotone.
    pub max_rise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QslScanResult {
    /// Sorted ascending.
    pub probed_times: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    pub final_infidelities: Vec<f64>,
    pub t_qsl: f64,
    /// Half-width of the final bracket.
    pub resolution: f64,
    /// Run at the shortest converging duration probed.
    #[serde(skip)]
    pub converged: Option<KrotovRecord>,
}

/// Scan settings beyond the per-run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub t_low: f64,
    pub t_high: f64,
    pub resolution: f64,
    /// Interior points evaluated on a uniform grid before bisecting; their
    /// verdicts must already be monotone in `T`.
    #[serde(default)]
    pub pre_grid: usize,
}

/// Configs shared by every probe in a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfigs {
    pub krotov: KrotovConfig,
    pub verdict: VerdictConfig,
    pub guess: GuessConfig,
}

/// Optimizes from the standard initial guess at duration `t` on the
/// default-density grid.
pub fn run_at(
    spec: &SystemSpec,
    process: &ProcessSpec,
    t: f64,
    krotov: &KrotovConfig,
    guess: &GuessConfig,
) -> Result<KrotovRecord> {
    let grid = TimeGrid::with_default_density(spec, t)?;
    let field = initial_guess(spec, process, grid, guess)?;
    optimize(spec, process, grid, &field, krotov)
}

pub fn probe(
    spec: &SystemSpec,
    process: &ProcessSpec,
    t: f64,
    cfgs: &RunConfigs,
) -> Result<(Probe, KrotovRecord)> {
    let record = run_at(spec, process, t, &cfgs.krotov, &cfgs.guess)?;
    let verdict = convergence_verdict(&record, &cfgs.verdict)?;
    Ok((
        Probe {
            duration: t,
            verdict,
            final_infidelity: record.final_infidelity(),
            iterations: record.iterations_run,
            max_rise: record
                .infidelity_history
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max),
        },
        record,
    ))
}

/// Bisects on `T` between a stalled `t_low` and a converging `t_high`.
pub fn qsl_scan(
    spec: &SystemSpec,
    process: &ProcessSpec,
    scan: &ScanConfig,
    cfgs: &RunConfigs,
) -> Result<QslScanResult> {
    qsl_scan_with(spec, process, scan, cfgs, |_| {})
}

/// [`qsl_scan`] reporting each probe as it completes.
pub fn qsl_scan_with(
    spec: &SystemSpec,
    process: &ProcessSpec,
    scan: &ScanConfig,
    cfgs: &RunConfigs,
    mut on_probe: impl FnMut(&Probe),
) -> Result<QslScanResult> {
    spec.validate()?;
    process.validate(spec)?;
    cfgs.krotov.validate()?;
    cfgs.verdict.validate()?;
    if !(scan.t_low > 0.0 && scan.t_high > scan.t_low && scan.resolution > 0.0) {
        return Err(QslError::InvalidParameter(format!(
            "scan needs 0 < t_low < t_high and resolution > 0, got [{}, {}] ± {}",
            scan.t_low, scan.t_high, scan.resolution
        )));
    }

    let mut probes: Vec<Probe> = Vec::new();
    let mut best: Option<(f64, KrotovRecord)> = None;
    let mut run = |t: f64, probes: &mut Vec<Probe>| -> Result<Verdict> {
        let (p, record) = probe(spec, process, t, cfgs)?;
        on_probe(&p);
        let v = p.verdict;
        if v == Verdict::Converging && best.as_ref().map_or(true, |(tb, _)| t < *tb) {
            best = Some((t, record));
        }
        probes.push(p);
        Ok(v)
    };

    if run(scan.t_low, &mut probes)? != Verdict::Stalled {
        return Err(QslError::BracketInvalid(format!(
            "lower endpoint T={} already converges",
            scan.t_low
        )));
    }
    if run(scan.t_high, &mut probes)? != Verdict::Converging {
        return Err(QslError::BracketInvalid(format!(
            "upper endpoint T={} does not converge",
            scan.t_high
        )));
    }

    let mut lo = scan.t_low;
    let mut hi = scan.t_high;
    if scan.pre_grid > 0 {
        let step = (scan.t_high - scan.t_low) / (scan.pre_grid + 1) as f64;
        for i in 1..=scan.pre_grid {
            run(scan.t_low + i as f64 * step, &mut probes)?;
        }
        check_monotone(&mut probes)?;
        lo = last_stalled(&probes);
        hi = first_converging(&probes);
    }

    while hi - lo > scan.resolution {
        let mid = 0.5 * (lo + hi);
        match run(mid, &mut probes)? {
            Verdict::Stalled => lo = mid,
            Verdict::Converging => hi = mid,
        }
    }
    check_monotone(&mut probes)?;

    Ok(QslScanResult {
        probed_times: probes.iter().map(|p| p.duration).collect(),
        verdicts: probes.iter().map(|p| p.verdict).collect(),
        final_infidelities: probes.iter().map(|p| p.final_infidelity).collect(),
        t_qsl: 0.5 * (lo + hi),
        resolution: 0.5 * (hi - lo),
        converged: best.map(|(_, r)| r),
    })
}

/// Sorts probes by duration and rejects any stalled run above a converging one.
fn check_monotone(probes: &mut [Probe]) -> Result<()> {
    probes.sort_by(|a, b| a.duration.total_cmp(&b.duration));
    if let Some(conv) = probes.iter().find(|p| p.verdict == Verdict::Converging) {
        if let Some(stall) = probes
            .iter()
            .rev()
            .find(|p| p.verdict == Verdict::Stalled && p.duration > conv.duration)
        {
            return Err(QslError::CriterionUnstable {
                stalled_at: stall.duration,
                converging_at: conv.duration,
            });
        }
    }
    Ok(())
}

fn last_stalled(sorted: &[Probe]) -> f64 {
    sorted
        .iter()
        .filter(|p| p.verdict == Verdict::Stalled)
        .map(|p| p.duration)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn first_converging(sorted: &[Probe]) -> f64 {
    sorted
        .iter()
        .filter(|p| p.verdict == Verdict::Converging)
        .map(|p| p.duration)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_plateau_stalls() {
        let h = vec![0.5; 400];
        assert_eq!(history_verdict(&h, &VerdictConfig::default()).unwrap(), Verdict::Stalled);
    }

    #[test]
    fn success_clause_wins() {
        let mut h = vec![0.5; 30];
        h.push(1e-6);
        // far too short for the curvature test, yet decided
        assert_eq!(
            history_verdict(&h, &VerdictConfig::default()).unwrap(),
            Verdict::Converging
        );
    }

    #[test]
    fn short_history_without_success_is_an_error() {
        let h = vec![0.5; 100];
        assert!(matches!(
            history_verdict(&h, &VerdictConfig::default()),
            Err(QslError::HistoryTooShort { len: 100, required: 200 })
        ));
    }

    #[test]
    fn accelerating_descent_converges() {
        let h: Vec<f64> = (0..1000).map(|k| 0.5 - 4e-7 * (k * k) as f64).collect();
        assert_eq!(
            history_verdict(&h, &VerdictConfig::default()).unwrap(),
            Verdict::Converging
        );
    }

    #[test]
    fn decaying_to_plateau_stalls() {
        let h: Vec<f64> = (0..1000)
            .map(|k| 0.1 + 0.2 * (-(k as f64) / 150.0).exp())
            .collect();
        assert!(tail_curvature(&h, &VerdictConfig::default()) > 0.0);
        assert_eq!(
            history_verdict(&h, &VerdictConfig::default()).unwrap(),
            Verdict::Stalled
        );
    }

    #[test]
    fn non_monotone_verdicts_rejected() {
        let p = |duration, verdict| Probe {
            duration,
            verdict,
            final_infidelity: 0.0,
            iterations: 0,
            max_rise: 0.0,
        };
        let mut ok = vec![
            p(3.0, Verdict::Converging),
            p(1.0, Verdict::Stalled),
            p(2.0, Verdict::Stalled),
        ];
        assert!(check_monotone(&mut ok).is_ok());
        assert_eq!(ok[0].duration, 1.0);
        assert_eq!(last_stalled(&ok), 2.0);
        assert_eq!(first_converging(&ok), 3.0);
        let mut bad = vec![
            p(1.0, Verdict::Stalled),
            p(2.0, Verdict::Converging),
            p(3.0, Verdict::Stalled),
        ];
        assert_eq!(
            check_monotone(&mut bad),
            Err(QslError::CriterionUnstable {
                stalled_at: 3.0,
                converging_at: 2.0
            })
        );
    }

    #[test]
    fn verdict_config_validation() {
        let even = VerdictConfig {
            smoothing_window: 20,
            ..Default::default()
        };
        assert!(even.validate().is_err());
        let tail = VerdictConfig {
            tail_fraction: 0.0,
            ..Default::default()
        };
        assert!(tail.validate().is_err());
        assert_eq!(VerdictConfig::default().min_history(), 200);
    }
}
