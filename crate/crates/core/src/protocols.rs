//! Sudden-switch reference protocols and the optimizer's initial guess.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlField, QuantumState, TimeGrid};
use crate::error::{QslError, Result};
use crate::model::SystemSpec;

/// Minimum number of grid intervals per sudden-switch segment.
pub const MIN_SEGMENT_INTERVALS: usize = 10;

/// State transfer `|initial⟩ → |goal⟩` between diabatic kets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub initial_index: usize,
    pub goal_index: usize,
}

impl ProcessSpec {
    pub fn new(initial_index: usize, goal_index: usize) -> Result<Self> {
        if initial_index == goal_index {
            return Err(QslError::InvalidParameter(
                "initial and goal states coincide".into(),
            ));
        }
        Ok(Self {
            initial_index,
            goal_index,
        })
    }

    /// Crossings `|1⟩ → |0⟩` through the first avoided crossing.
    pub fn single_crossing() -> Self {
        Self {
            initial_index: 1,
            goal_index: 0,
        }
    }

    /// `|0⟩ → |2⟩` through both crossings of the three-level system.
    pub fn double_crossing() -> Self {
        Self {
            initial_index: 0,
            goal_index: 2,
        }
    }

    /// `|0⟩ → |N−1⟩` through every crossing of the ladder.
    pub fn full_ladder(n_levels: usize) -> Self {
        Self {
            initial_index: 0,
            goal_index: n_levels - 1,
        }
    }

    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        if self.initial_index == self.goal_index {
            return Err(QslError::InvalidParameter(
                "initial and goal states coincide".into(),
            ));
        }
        let n = spec.n_levels;
        if self.initial_index >= n || self.goal_index >= n {
            return Err(QslError::InvalidParameter(format!(
                "process {}→{} out of range for {n} levels",
                self.initial_index, self.goal_index
            )));
        }
        Ok(())
    }

    /// Crossing indices traversed in order; crossing `j` couples `|j⟩` and `|j+1⟩`.
    pub fn path(&self) -> Vec<usize> {
        if self.initial_index < self.goal_index {
            (self.initial_index..self.goal_index).collect()
        } else {
            (self.goal_index..self.initial_index).rev().collect()
        }
    }

    pub fn initial_state(&self, spec: &SystemSpec) -> Result<QuantumState> {
        self.validate(spec)?;
        QuantumState::basis(spec.n_levels, self.initial_index)
    }

    pub fn goal_state(&self, spec: &SystemSpec) -> Result<QuantumState> {
        self.validate(spec)?;
        QuantumState::basis(spec.n_levels, self.goal_index)
    }
}

/// `λ_j = j·ε0`, where diabatic levels `j` and `j+1` are degenerate.
pub fn crossing_positions(spec: &SystemSpec) -> Vec<f64> {
    (0..spec.n_levels - 1)
        .map(|j| j as f64 * spec.spacing)
        .collect()
}

/// One constant-λ segment of a staircase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lambda: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuddenSwitch {
    pub segments: Vec<Segment>,
    pub total_time: f64,
    pub field: ControlField,
}

/// Segments of the sudden-switch staircase: `π/Δ_j` at each crossing on the path.
pub fn staircase(spec: &SystemSpec, process: &ProcessSpec) -> Result<Vec<Segment>> {
    spec.validate()?;
    process.validate(spec)?;
    let positions = crossing_positions(spec);
    Ok(process
        .path()
        .into_iter()
        .map(|j| Segment {
            lambda: positions[j],
            duration: PI / spec.gaps[j],
        })
        .collect())
}

/// Sudden-switch time `Σ_j π/Δ_j` over the traversed crossings.
pub fn sudden_switch_time(spec: &SystemSpec, process: &ProcessSpec) -> Result<f64> {
    Ok(staircase(spec, process)?.iter().map(|s| s.duration).sum())
}

/// The sudden-switch staircase sampled on `grid` (or on the default-density
/// grid spanning the protocol). Segment lengths are whole intervals
/// apportioned by largest remainder.
pub fn sudden_switch(
    spec: &SystemSpec,
    process: &ProcessSpec,
    grid: Option<TimeGrid>,
) -> Result<SuddenSwitch> {
    let segments = staircase(spec, process)?;
    let total_time: f64 = segments.iter().map(|s| s.duration).sum();
    let grid = match grid {
        Some(g) => g,
        None => TimeGrid::with_default_density(spec, total_time)?,
    };
    let weights: Vec<f64> = segments.iter().map(|s| s.duration).collect();
    let counts = largest_remainder(&weights, grid.n_steps);
    if let Some((segment, &intervals)) = counts
        .iter()
        .enumerate()
        .find(|(_, &c)| c < MIN_SEGMENT_INTERVALS)
    {
        return Err(QslError::GridTooCoarse {
            segment,
            intervals,
            required: MIN_SEGMENT_INTERVALS,
        });
    }
    let values = segments
        .iter()
        .zip(&counts)
        .flat_map(|(s, &c)| std::iter::repeat(s.lambda).take(c))
        .collect();
    Ok(SuddenSwitch {
        segments,
        total_time,
        field: ControlField::new(grid, values)?,
    })
}

/// Splits `total` units proportionally to `weights`, handing leftovers to the
/// largest fractional parts (ties to the earlier entry).
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingKernel {
    #[default]
    Gaussian,
    /// Uniform kernel of half-width `√3·σ` (same variance as the Gaussian).
    Box,
}

/// Initial-guess shaping: smoothing of the rescaled staircase plus a linear
/// tilt `α·ε0·(t/T − 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuessConfig {
    /// Kernel standard deviation (time units).
    pub smoothing_width: f64,
    pub linear_slope_fraction: f64,
    #[serde(default)]
    pub kernel: SmoothingKernel,
}

impl Default for GuessConfig {
    fn default() -> Self {
        Self {
            smoothing_width: 0.05,
            linear_slope_fraction: 0.05,
            kernel: SmoothingKernel::Gaussian,
        }
    }
}

impl GuessConfig {
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !(self.smoothing_width > 0.0 && self.smoothing_width < duration / 10.0) {
            return Err(QslError::InvalidParameter(format!(
                "smoothing width {} must lie in (0, T/10) for T = {duration}",
                self.smoothing_width
            )));
        }
        if !(self.linear_slope_fraction.abs() <= 0.2) {
            return Err(QslError::InvalidParameter(format!(
                "linear slope fraction {} exceeds 0.2 in magnitude",
                self.linear_slope_fraction
            )));
        }
        Ok(())
    }
}

/// The sudden-switch staircase stretched to `grid.duration`, smoothed and tilted.
pub fn initial_guess(
    spec: &SystemSpec,
    process: &ProcessSpec,
    grid: TimeGrid,
    cfg: &GuessConfig,
) -> Result<ControlField> {
    cfg.validate(grid.duration)?;
    let segments = staircase(spec, process)?;
    let t_switch: f64 = segments.iter().map(|s| s.duration).sum();
    let stretch = grid.duration / t_switch;
    let segments: Vec<Segment> = segments
        .into_iter()
        .map(|s| Segment {
            lambda: s.lambda,
            duration: s.duration * stretch,
        })
        .collect();
    let shortest = segments
        .iter()
        .map(|s| s.duration)
        .fold(f64::INFINITY, f64::min);
    let reach = match cfg.kernel {
        SmoothingKernel::Gaussian => cfg.smoothing_width,
        SmoothingKernel::Box => 3f64.sqrt() * cfg.smoothing_width,
    };
    if reach >= shortest {
        return Err(QslError::InvalidParameter(format!(
            "smoothing reach {reach} not below shortest segment {shortest}"
        )));
    }
    let t_total = grid.duration;
    let slope = cfg.linear_slope_fraction * spec.spacing;
    ControlField::from_fn(grid, |t| {
        smoothed_staircase(&segments, t_total, cfg.smoothing_width, cfg.kernel, t) + slope * (t / t_total - 0.5)
    })
}

/// Kernel convolution of a staircase on `[0, T]`, mirrored at both ends.
fn smoothed_staircase(
    segments: &[Segment],
    t_total: f64,
    sigma: f64,
    kernel: SmoothingKernel,
    t: f64,
) -> f64 {
    // Mass of the kernel centred at t falling in [a, b].
    let mass = |a: f64, b: f64| match kernel {
        SmoothingKernel::Gaussian => {
            let s = sigma * std::f64::consts::SQRT_2;
            0.5 * (libm::erf((b - t) / s) - libm::erf((a - t) / s))
        }
        SmoothingKernel::Box => {
            let h = 3f64.sqrt() * sigma;
            let lo = a.max(t - h);
            let hi = b.min(t + h);
            (hi - lo).max(0.0) / (2.0 * h)
        }
    };
    let mut acc = 0.0;
    let mut start = 0.0;
    for seg in segments {
        let end = start + seg.duration;
        // Original plus mirror images about t = 0 and t = T.
        acc += seg.lambda
            * (mass(start, end) + mass(-end, -start) + mass(2.0 * t_total - end, 2.0 * t_total - start));
        start = end;
    }
    acc
}
