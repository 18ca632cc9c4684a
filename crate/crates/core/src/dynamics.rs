//! Exact piecewise-constant Schrödinger propagation, populations, fidelity
//! and the time-independent Mandelstam–Tamm bound.

use serde::{Deserialize, Serialize};

use crate::error::{QslError, Result};
use crate::linalg::{Eigh, C64};
use crate::model::{build_hamiltonian, hamiltonian_unchecked, SystemSpec};

/// Uniform grid of `n_steps` intervals over `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub duration: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(duration: f64, n_steps: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(QslError::InvalidParameter(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        if n_steps == 0 {
            return Err(QslError::InvalidParameter("n_steps must be at least 1".into()));
        }
        Ok(Self { duration, n_steps })
    }

    /// Grid with `dt ≤ min(0.02/Δ_min, 0.1/ε0)`.
    pub fn with_default_density(spec: &SystemSpec, duration: f64) -> Result<Self> {
        let dt = default_dt(spec);
        Self::new(duration, (duration / dt).ceil().max(1.0) as usize)
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.n_steps as f64
    }

    /// Grid points `t_0 = 0, …, t_M = T`.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps).map(|j| j as f64 * dt).collect()
    }

    /// Interval midpoints.
    pub fn midpoints(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_steps).map(|j| (j as f64 + 0.5) * dt).collect()
    }
}

pub fn default_dt(spec: &SystemSpec) -> f64 {
    (0.02 / spec.min_gap()).min(0.1 / spec.spacing)
}

/// Control values, one constant `λ_j` per grid interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlField {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl ControlField {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps {
            return Err(QslError::DimensionMismatch {
                expected: grid.n_steps,
                got: values.len(),
            });
        }
        let field = Self { grid, values };
        field.check_finite()?;
        Ok(field)
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_steps])
    }

    /// Samples `f` at interval midpoints.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.midpoints().into_iter().map(f).collect())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(QslError::NonFiniteField {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }
}

/// Unit-norm state vector in the diabatic basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState(Vec<C64>);

impl QuantumState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QslError::InvalidParameter(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(Self(amplitudes))
    }

    /// Diabatic basis ket `|k⟩` of an `n`-level system.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(QslError::InvalidParameter(format!(
                "basis index {k} out of range for {n} levels"
            )));
        }
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[k] = C64::new(1.0, 0.0);
        Ok(Self(v))
    }

    /// Wraps amplitudes without the unit-norm check (costates).
    pub(crate) fn unnormalized(amplitudes: Vec<C64>) -> Self {
        Self(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &QuantumState) -> C64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// States sampled at every grid point, `states[0]` at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<QuantumState>,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Per-interval eigendecompositions of `H(λ_j)`.
pub(crate) struct Propagators {
    pub dt: f64,
    pub steps: Vec<Eigh>,
}

impl Propagators {
    pub fn build(spec: &SystemSpec, field: &ControlField) -> Self {
        Self {
            dt: field.grid.dt(),
            steps: field
                .values
                .iter()
                .map(|&l| interval_eigh(spec, l))
                .collect(),
        }
    }
}

#[inline]
pub(crate) fn interval_eigh(spec: &SystemSpec, lambda: f64) -> Eigh {
    hamiltonian_unchecked(spec, lambda).eigh()
}

pub(crate) fn check_inputs(spec: &SystemSpec, field: &ControlField, state: &QuantumState) -> Result<()> {
    spec.validate()?;
    if state.dim() != spec.n_levels {
        return Err(QslError::DimensionMismatch {
            expected: spec.n_levels,
            got: state.dim(),
        });
    }
    if field.values.len() != field.grid.n_steps {
        return Err(QslError::DimensionMismatch {
            expected: field.grid.n_steps,
            got: field.values.len(),
        });
    }
    field.check_finite()
}

/// Forward propagation: `ψ_{j+1} = exp(−i H(λ_j) dt) ψ_j`.
pub fn propagate(spec: &SystemSpec, field: &ControlField, initial: &QuantumState) -> Result<Trajectory> {
    check_inputs(spec, field, initial)?;
    Ok(forward_with(&Propagators::build(spec, field), field.grid, initial))
}

pub(crate) fn forward_with(props: &Propagators, grid: TimeGrid, initial: &QuantumState) -> Trajectory {
    let mut states = Vec::with_capacity(props.steps.len() + 1);
    states.push(initial.clone());
    for step in &props.steps {
        let next = step.evolve(states.last().unwrap().amplitudes(), props.dt);
        states.push(QuantumState::unnormalized(next));
    }
    Trajectory { grid, states }
}

/// Backward propagation from `terminal` at `t = T`:
/// `χ_j = exp(+i H(λ_j) dt) χ_{j+1}`.
pub(crate) fn backward_with(props: &Propagators, grid: TimeGrid, terminal: &QuantumState) -> Trajectory {
    let m = props.steps.len();
    let mut states = vec![terminal.clone(); m + 1];
    for j in (0..m).rev() {
        let prev = props.steps[j].evolve(states[j + 1].amplitudes(), -props.dt);
        states[j] = QuantumState::unnormalized(prev);
    }
    Trajectory { grid, states }
}

/// `P_k(t_j) = |⟨k|ψ(t_j)⟩|²`, one row per grid point.
pub fn populations(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.states.iter().map(QuantumState::populations).collect()
}

/// `1 − |⟨goal|final⟩|²`.
pub fn infidelity(final_state: &QuantumState, goal: &QuantumState) -> Result<f64> {
    if final_state.dim() != goal.dim() {
        return Err(QslError::DimensionMismatch {
            expected: goal.dim(),
            got: final_state.dim(),
        });
    }
    Ok((1.0 - goal.overlap(final_state).norm_sqr()).clamp(0.0, 1.0))
}

/// Mandelstam–Tamm minimum time `arccos(|⟨ψ_i|ψ_f⟩|) / ΔE` for the static
/// Hamiltonian `H(λ)`, with `ΔE` the energy spread of `initial`.
pub fn mt_bound(
    spec: &SystemSpec,
    lambda: f64,
    initial: &QuantumState,
    final_state: &QuantumState,
) -> Result<f64> {
    let h = build_hamiltonian(spec, lambda)?;
    for s in [initial, final_state] {
        if s.dim() != spec.n_levels {
            return Err(QslError::DimensionMismatch {
                expected: spec.n_levels,
                got: s.dim(),
            });
        }
    }
    let h_psi = h.apply(initial.amplitudes());
    let mean: f64 = initial
        .amplitudes()
        .iter()
        .zip(&h_psi)
        .map(|(a, b)| (a.conj() * b).re)
        .sum();
    // ‖(H − ⟨H⟩)ψ‖² avoids cancellation in ⟨H²⟩ − ⟨H⟩².
    let variance: f64 = h_psi
        .iter()
        .zip(initial.amplitudes())
        .map(|(hp, p)| (hp - p * mean).norm_sqr())
        .sum();
    let second: f64 = h_psi.iter().map(|z| z.norm_sqr()).sum();
    let angle = initial.overlap(final_state).norm().min(1.0).acos();
    if angle == 0.0 {
        return Ok(0.0);
    }
    if variance <= 1e-3 * f64::EPSILON * second.max(f64::MIN_POSITIVE) {
        return Err(QslError::BoundUndefined);
    }
    Ok(angle / variance.sqrt())
}
