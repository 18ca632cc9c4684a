//! Sequential first-order Krotov iteration for state-to-state transfer.
//!
//! Each iteration propagates the costate `χ(T) = ⟨ψ_g|ψ(T)⟩ |ψ_g⟩` backward
//! under the current field, then sweeps forward updating one interval at a
//! time with the freshly propagated state:
//!
//! `λ_j ← λ_j + (S_j / μ) · Im⟨χ_j| ∂H/∂λ |ψ_j⟩`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    backward_with, check_inputs, interval_eigh, ControlField, Propagators, QuantumState, TimeGrid,
    Trajectory,
};
use crate::error::{QslError, Result};
use crate::linalg::{Eigh, C64};
use crate::model::SystemSpec;
use crate::protocols::ProcessSpec;

/// Slack allowed on `I_{k+1} ≤ I_k` before a step counts as a regression.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

const MAX_BACKOFFS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShapeProfile {
    Flat,
    /// `sin²` ramps over `edge_fraction · T` at both ends.
    Ramped { edge_fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrotovConfig {
    /// Inverse update magnitude `μ`; `None` picks `0.1 / ε0`.
    pub step_weight: Option<f64>,
    pub shape_profile: ShapeProfile,
    pub max_iterations: usize,
    pub target_infidelity: f64,
}

impl Default for KrotovConfig {
    fn default() -> Self {
        Self {
            step_weight: None,
            shape_profile: ShapeProfile::Flat,
            max_iterations: 5000,
            target_infidelity: 1e-4,
        }
    }
}

impl KrotovConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.step_weight {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(QslError::InvalidParameter(format!(
                    "step weight must be positive, got {mu}"
                )));
            }
        }
        if let ShapeProfile::Ramped { edge_fraction } = self.shape_profile {
            if !(edge_fraction > 0.0 && edge_fraction < 0.5) {
                return Err(QslError::InvalidParameter(format!(
                    "edge fraction must lie in (0, 0.5), got {edge_fraction}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(QslError::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.target_infidelity >= 0.0) {
            return Err(QslError::InvalidParameter(format!(
                "target infidelity must be nonnegative, got {}",
                self.target_infidelity
            )));
        }
        Ok(())
    }

    pub fn resolved_step_weight(&self, spec: &SystemSpec) -> f64 {
        self.step_weight.unwrap_or_else(|| default_step_weight(spec))
    }
}

/// `0.1 / ε0`: large enough steps that the field reaches amplitudes ~ε0
/// within a few hundred iterations. Scales as 1/energy, so optimization is
/// covariant under rescaling energies.
pub fn default_step_weight(spec: &SystemSpec) -> f64 {
    0.1 / spec.spacing
}

/// Update shape `S(t)` evaluated at interval midpoints.
pub fn shape_samples(profile: ShapeProfile, grid: &TimeGrid) -> Vec<f64> {
    match profile {
        ShapeProfile::Flat => vec![1.0; grid.n_steps],
        ShapeProfile::Ramped { edge_fraction } => {
            let ramp = edge_fraction * grid.duration;
            grid.midpoints()
                .into_iter()
                .map(|t| {
                    let edge = t.min(grid.duration - t);
                    if edge >= ramp {
                        1.0
                    } else {
                        (std::f64::consts::FRAC_PI_2 * edge / ramp).sin().powi(2)
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetReached,
    IterationCap,
}

/// History of one optimization run at fixed `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrotovRecord {
    /// `I_k` for `k = 0..=iterations_run`.
    pub infidelity_history: Vec<f64>,
    pub final_field: ControlField,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    /// `μ` in effect when the run stopped (after any backoff).
    pub final_step_weight: f64,
}

impl KrotovRecord {
    pub fn final_infidelity(&self) -> f64 {
        *self.infidelity_history.last().unwrap()
    }

    pub fn min_infidelity(&self) -> f64 {
        self.infidelity_history
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Backward propagation of a costate seeded at `t = T`.
///
/// The propagation is unitary, so the norm of `terminal_costate` (typically
/// `|⟨ψ_g|ψ(T)⟩| ≤ 1`) is carried unchanged to every grid point.
pub fn backward_propagate(
    spec: &SystemSpec,
    field: &ControlField,
    terminal_costate: &QuantumState,
) -> Result<Trajectory> {
    check_inputs(spec, field, terminal_costate)?;
    Ok(backward_with(
        &Propagators::build(spec, field),
        field.grid,
        terminal_costate,
    ))
}

/// Costate seed `⟨goal|ψ(T)⟩ · |goal⟩`.
pub fn terminal_costate(final_state: &QuantumState, goal: &QuantumState) -> QuantumState {
    let a = goal.overlap(final_state);
    QuantumState::unnormalized(goal.amplitudes().iter().map(|g| g * a).collect())
}

/// Field, its propagators and forward states (flat, `(M+1) × N`).
struct Iterate {
    field: Vec<f64>,
    props: Vec<Eigh>,
    forward: Vec<C64>,
    infidelity: f64,
}

struct Engine<'a> {
    spec: &'a SystemSpec,
    grid: TimeGrid,
    n: usize,
    dt: f64,
    coupling: Vec<f64>,
    initial: Vec<C64>,
    goal: Vec<C64>,
    shape: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(
        spec: &'a SystemSpec,
        process: &ProcessSpec,
        grid: TimeGrid,
        profile: ShapeProfile,
    ) -> Result<Self> {
        Ok(Self {
            spec,
            grid,
            n: spec.n_levels,
            dt: grid.dt(),
            coupling: spec.coupling_diagonal(),
            initial: process.initial_state(spec)?.amplitudes().to_vec(),
            goal: process.goal_state(spec)?.amplitudes().to_vec(),
            shape: shape_samples(profile, &grid),
        })
    }

    fn infidelity_of(&self, psi_t: &[C64]) -> f64 {
        let a: C64 = self.goal.iter().zip(psi_t).map(|(g, p)| g.conj() * p).sum();
        (1.0 - a.norm_sqr()).clamp(0.0, 1.0)
    }

    fn evaluate(&self, field: Vec<f64>) -> Iterate {
        let n = self.n;
        let props: Vec<Eigh> = field.iter().map(|&l| interval_eigh(self.spec, l)).collect();
        let mut forward = vec![C64::new(0.0, 0.0); (field.len() + 1) * n];
        forward[..n].copy_from_slice(&self.initial);
        for (j, p) in props.iter().enumerate() {
            let (done, rest) = forward.split_at_mut((j + 1) * n);
            p.evolve_into(&done[j * n..], self.dt, &mut rest[..n]);
        }
        let infidelity = self.infidelity_of(&forward[field.len() * n..]);
        Iterate {
            field,
            props,
            forward,
            infidelity,
        }
    }

    /// Backward costate, flat `(M+1) × N`.
    fn costates(&self, it: &Iterate) -> Vec<C64> {
        let n = self.n;
        let m = it.field.len();
        let psi_t = &it.forward[m * n..];
        let a: C64 = self.goal.iter().zip(psi_t).map(|(g, p)| g.conj() * p).sum();
        let mut chi = vec![C64::new(0.0, 0.0); (m + 1) * n];
        for (c, g) in chi[m * n..].iter_mut().zip(&self.goal) {
            *c = g * a;
        }
        for j in (0..m).rev() {
            let (head, tail) = chi.split_at_mut((j + 1) * n);
            it.props[j].evolve_into(&tail[..n], -self.dt, &mut head[j * n..]);
        }
        chi
    }

    #[inline]
    fn signal(&self, chi: &[C64], psi: &[C64]) -> f64 {
        chi.iter()
            .zip(psi)
            .zip(&self.coupling)
            .map(|((c, p), d)| d * (c.conj() * p).im)
            .sum()
    }

    /// `Im⟨χ_j|∂H/∂λ|ψ_j⟩` for the unmodified field.
    fn gradient_signal(&self, it: &Iterate) -> Vec<f64> {
        let n = self.n;
        let chi = self.costates(it);
        (0..it.field.len())
            .map(|j| self.signal(&chi[j * n..(j + 1) * n], &it.forward[j * n..(j + 1) * n]))
            .collect()
    }

    fn sweep(&self, it: &Iterate, mu: f64) -> Result<Iterate> {
        let n = self.n;
        let m = it.field.len();
        let chi = self.costates(it);
        let mut field = Vec::with_capacity(m);
        let mut props = Vec::with_capacity(m);
        let mut forward = vec![C64::new(0.0, 0.0); (m + 1) * n];
        forward[..n].copy_from_slice(&self.initial);
        for j in 0..m {
            let s = self.signal(&chi[j * n..(j + 1) * n], &forward[j * n..(j + 1) * n]);
            let lambda = it.field[j] + self.shape[j] / mu * s;
            if !lambda.is_finite() {
                return Err(QslError::NonFiniteUpdate {
                    index: j,
                    step_weight: mu,
                });
            }
            let p = interval_eigh(self.spec, lambda);
            let (done, rest) = forward.split_at_mut((j + 1) * n);
            p.evolve_into(&done[j * n..], self.dt, &mut rest[..n]);
            field.push(lambda);
            props.push(p);
        }
        let infidelity = self.infidelity_of(&forward[m * n..]);
        Ok(Iterate {
            field,
            props,
            forward,
            infidelity,
        })
    }

    fn field_of(&self, values: Vec<f64>) -> Result<ControlField> {
        ControlField::new(self.grid, values)
    }
}

fn check_field(spec: &SystemSpec, process: &ProcessSpec, field: &ControlField) -> Result<()> {
    spec.validate()?;
    process.validate(spec)?;
    check_inputs(spec, field, &process.initial_state(spec)?)
}

/// One sequential Krotov update with `μ` from `cfg`. Returns the updated field
/// and the infidelity it achieves.
pub fn krotov_step(
    spec: &SystemSpec,
    process: &ProcessSpec,
    field: &ControlField,
    cfg: &KrotovConfig,
) -> Result<(ControlField, f64)> {
    cfg.validate()?;
    check_field(spec, process, field)?;
    let engine = Engine::new(spec, process, field.grid, cfg.shape_profile)?;
    let mu = cfg.resolved_step_weight(spec);
    let next = engine.sweep(&engine.evaluate(field.values.clone()), mu)?;
    Ok((engine.field_of(next.field)?, next.infidelity))
}

/// `Im⟨χ_j|∂H/∂λ|ψ_j⟩` per interval, with both trajectories under `field`.
/// `dF/dλ_j ≈ 2·dt·signal_j` to first order.
pub fn gradient_signal(
    spec: &SystemSpec,
    process: &ProcessSpec,
    field: &ControlField,
) -> Result<Vec<f64>> {
    check_field(spec, process, field)?;
    let engine = Engine::new(spec, process, field.grid, ShapeProfile::Flat)?;
    Ok(engine.gradient_signal(&engine.evaluate(field.values.clone())))
}

/// Infidelity reached by `field` without optimization.
pub fn evaluate_infidelity(
    spec: &SystemSpec,
    process: &ProcessSpec,
    field: &ControlField,
) -> Result<f64> {
    check_field(spec, process, field)?;
    let engine = Engine::new(spec, process, field.grid, ShapeProfile::Flat)?;
    Ok(engine.evaluate(field.values.clone()).infidelity)
}

/// Iterates Krotov sweeps until `target_infidelity` or `max_iterations`.
///
/// A sweep that raises the infidelity is discarded and retried with `μ`
/// doubled, so the recorded history is non-increasing.
pub fn optimize(
    spec: &SystemSpec,
    process: &ProcessSpec,
    grid: TimeGrid,
    guess: &ControlField,
    cfg: &KrotovConfig,
) -> Result<KrotovRecord> {
    cfg.validate()?;
    if guess.grid != grid {
        return Err(QslError::InvalidParameter(
            "guess field is not sampled on the requested grid".into(),
        ));
    }
    check_field(spec, process, guess)?;
    let engine = Engine::new(spec, process, grid, cfg.shape_profile)?;
    let mut mu = cfg.resolved_step_weight(spec);
    let mut current = engine.evaluate(guess.values.clone());
    let mut history = vec![current.infidelity];
    let mut terminated_by = Termination::IterationCap;

    if current.infidelity <= cfg.target_infidelity {
        terminated_by = Termination::TargetReached;
    } else {
        'outer: for _ in 0..cfg.max_iterations {
            let mut backoffs = 0;
            let next = loop {
                let candidate = engine.sweep(&current, mu)?;
                if candidate.infidelity <= current.infidelity + MONOTONICITY_SLACK {
                    break candidate;
                }
                backoffs += 1;
                if backoffs > MAX_BACKOFFS {
                    // no descent available at any step size; hold the field
                    history.push(current.infidelity);
                    continue 'outer;
                }
                mu *= 2.0;
            };
            current = next;
            history.push(current.infidelity);
            if current.infidelity <= cfg.target_infidelity {
                terminated_by = Termination::TargetReached;
                break;
            }
        }
    }

    Ok(KrotovRecord {
        iterations_run: history.len() - 1,
        infidelity_history: history,
        final_field: engine.field_of(current.field)?,
        terminated_by,
        final_step_weight: mu,
    })
}
