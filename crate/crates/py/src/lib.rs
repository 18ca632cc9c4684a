use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qsl_core::analysis;
use qsl_core::dynamics::{self, ControlField, TimeGrid};
use qsl_core::krotov::{self, KrotovConfig};
use qsl_core::model;
use qsl_core::protocols::{self, GuessConfig};
use qsl_core::qsl::{self as scan, RunConfigs, ScanConfig, VerdictConfig};
use qsl_core::QslError;

fn err(e: QslError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "SystemSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PySystemSpec(model::SystemSpec);

#[pymethods]
impl PySystemSpec {
    #[new]
    fn new(n_levels: usize, gaps: Vec<f64>, spacing: f64) -> PyResult<Self> {
        model::SystemSpec::new(n_levels, gaps, spacing).map(Self).map_err(err)
    }

    #[staticmethod]
    fn three_level(delta_a: f64, delta_b: f64, spacing: f64) -> PyResult<Self> {
        model::SystemSpec::three_level(delta_a, delta_b, spacing).map(Self).map_err(err)
    }

    #[staticmethod]
    fn uniform(n_levels: usize, gap: f64, spacing: f64) -> PyResult<Self> {
        model::SystemSpec::uniform(n_levels, gap, spacing).map(Self).map_err(err)
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.0.n_levels
    }

    #[getter]
    fn gaps(&self) -> Vec<f64> {
        self.0.gaps.clone()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing
    }

    /// Row-major `H(λ)` as nested lists of complex numbers.
    fn hamiltonian(&self, lambda: f64) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let h = model::build_hamiltonian(&self.0, lambda).map_err(err)?;
        let n = self.0.n_levels;
        Ok((0..n)
            .map(|r| (0..n).map(|c| (h.get(r, c).re, h.get(r, c).im)).collect())
            .collect())
    }

    fn eigen_spectrum(&self, lambda: f64) -> PyResult<Vec<f64>> {
        model::eigen_spectrum(&self.0, lambda).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemSpec(n_levels={}, gaps={:?}, spacing={})",
            self.0.n_levels, self.0.gaps, self.0.spacing
        )
    }
}

#[pyclass(name = "ProcessSpec", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyProcessSpec(protocols::ProcessSpec);

#[pymethods]
impl PyProcessSpec {
    #[new]
    fn new(initial_index: usize, goal_index: usize) -> PyResult<Self> {
        protocols::ProcessSpec::new(initial_index, goal_index).map(Self).map_err(err)
    }

    #[staticmethod]
    fn single_crossing() -> Self {
        Self(protocols::ProcessSpec::single_crossing())
    }

    #[staticmethod]
    fn double_crossing() -> Self {
        Self(protocols::ProcessSpec::double_crossing())
    }

    #[staticmethod]
    fn full_ladder(n_levels: usize) -> Self {
        Self(protocols::ProcessSpec::full_ladder(n_levels))
    }

    #[getter]
    fn initial_index(&self) -> usize {
        self.0.initial_index
    }

    #[getter]
    fn goal_index(&self) -> usize {
        self.0.goal_index
    }

    fn __repr__(&self) -> String {
        format!("ProcessSpec({} -> {})", self.0.initial_index, self.0.goal_index)
    }
}

#[pyfunction]
fn sudden_switch_time(spec: &PySystemSpec, process: &PyProcessSpec) -> PyResult<f64> {
    protocols::sudden_switch_time(&spec.0, &process.0).map_err(err)
}

fn grid(spec: &model::SystemSpec, duration: f64, n_steps: Option<usize>) -> PyResult<TimeGrid> {
    match n_steps {
        Some(n) => TimeGrid::new(duration, n),
        None => TimeGrid::with_default_density(spec, duration),
    }
    .map_err(err)
}

/// Smoothed, tilted staircase sampled at interval midpoints.
#[pyfunction]
#[pyo3(signature = (spec, process, duration, n_steps=None, smoothing_width=0.05, linear_slope_fraction=0.05))]
fn initial_guess(
    spec: &PySystemSpec,
    process: &PyProcessSpec,
    duration: f64,
    n_steps: Option<usize>,
    smoothing_width: f64,
    linear_slope_fraction: f64,
) -> PyResult<Vec<f64>> {
    let g = grid(&spec.0, duration, n_steps)?;
    let cfg = GuessConfig {
        smoothing_width,
        linear_slope_fraction,
        ..Default::default()
    };
    protocols::initial_guess(&spec.0, &process.0, g, &cfg)
        .map(|f| f.values)
        .map_err(err)
}

/// Populations `P_k(t)` at every grid point of a piecewise-constant field.
#[pyfunction]
fn propagate(
    spec: &PySystemSpec,
    process: &PyProcessSpec,
    field: Vec<f64>,
    duration: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let g = TimeGrid::new(duration, field.len()).map_err(err)?;
    let field = ControlField::new(g, field).map_err(err)?;
    let psi0 = process.0.initial_state(&spec.0).map_err(err)?;
    let traj = dynamics::propagate(&spec.0, &field, &psi0).map_err(err)?;
    Ok(dynamics::populations(&traj))
}

#[pyfunction]
fn infidelity(
    spec: &PySystemSpec,
    process: &PyProcessSpec,
    field: Vec<f64>,
    duration: f64,
) -> PyResult<f64> {
    let g = TimeGrid::new(duration, field.len()).map_err(err)?;
    let field = ControlField::new(g, field).map_err(err)?;
    krotov::evaluate_infidelity(&spec.0, &process.0, &field).map_err(err)
}

/// Krotov optimization from the standard initial guess.
#[pyfunction]
#[pyo3(signature = (spec, process, duration, max_iterations=5000, target_infidelity=1e-4, step_weight=None))]
fn optimize<'py>(
    py: Python<'py>,
    spec: &PySystemSpec,
    process: &PyProcessSpec,
    duration: f64,
    max_iterations: usize,
    target_infidelity: f64,
    step_weight: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = KrotovConfig {
        step_weight,
        max_iterations,
        target_infidelity,
        ..Default::default()
    };
    let (s, p) = (spec.0.clone(), process.0);
    let rec = py
        .detach(move || scan::run_at(&s, &p, duration, &cfg, &GuessConfig::default()))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("infidelity_history", rec.infidelity_history.clone())?;
    d.set_item("field", rec.final_field.values.clone())?;
    d.set_item("iterations", rec.iterations_run)?;
    d.set_item("final_infidelity", rec.final_infidelity())?;
    d.set_item(
        "terminated_by",
        match rec.terminated_by {
            krotov::Termination::TargetReached => "target_reached",
            krotov::Termination::IterationCap => "iteration_cap",
        },
    )?;
    Ok(d)
}

/// Bisection for the QSL time; bracket in absolute time units.
#[pyfunction]
#[pyo3(signature = (spec, process, t_low, t_high, resolution, max_iterations=5000))]
fn qsl_scan<'py>(
    py: Python<'py>,
    spec: &PySystemSpec,
    process: &PyProcessSpec,
    t_low: f64,
    t_high: f64,
    resolution: f64,
    max_iterations: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfgs = RunConfigs {
        krotov: KrotovConfig {
            max_iterations,
            ..Default::default()
        },
        verdict: VerdictConfig::default(),
        guess: GuessConfig::default(),
    };
    let sc = ScanConfig {
        t_low,
        t_high,
        resolution,
        pre_grid: 0,
    };
    let (s, p) = (spec.0.clone(), process.0);
    let r = py
        .detach(move || scan::qsl_scan(&s, &p, &sc, &cfgs))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t_qsl", r.t_qsl)?;
    d.set_item("resolution", r.resolution)?;
    d.set_item("probed_times", r.probed_times.clone())?;
    d.set_item(
        "verdicts",
        r.verdicts
            .iter()
            .map(|v| format!("{v:?}").to_lowercase())
            .collect::<Vec<_>>(),
    )?;
    d.set_item("final_infidelities", r.final_infidelities.clone())?;
    Ok(d)
}

/// Oscillation spectrum of a field record; returns the amplitude spectrum,
/// dominant frequency (or None) and peak deviation from the baseline.
#[pyfunction]
#[pyo3(signature = (field, duration, window, switch_times=Vec::new()))]
fn field_spectrum<'py>(
    py: Python<'py>,
    field: Vec<f64>,
    duration: f64,
    window: usize,
    switch_times: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let g = TimeGrid::new(duration, field.len()).map_err(err)?;
    let field = ControlField::new(g, field).map_err(err)?;
    let sp = analysis::field_spectrum(&field, window, &switch_times).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("frequencies", sp.frequencies.clone())?;
    d.set_item("amplitudes", sp.amplitudes.clone())?;
    d.set_item("dominant_frequency", sp.dominant_frequency)?;
    d.set_item("max_amplitude", sp.max_amplitude)?;
    Ok(d)
}

/// `(τ, residuals)` of `T_QSL(N) = (N−1)π/Δ − (N−2)τ`.
#[pyfunction]
fn fit_beta_tau(points: Vec<(usize, f64)>, gap: f64) -> PyResult<(f64, Vec<f64>)> {
    let f = analysis::fit_beta_tau(&points, gap).map_err(err)?;
    Ok((f.tau, f.residuals))
}

#[pymodule]
fn qsl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemSpec>()?;
    m.add_class::<PyProcessSpec>()?;
    m.add_function(wrap_pyfunction!(sudden_switch_time, m)?)?;
    m.add_function(wrap_pyfunction!(initial_guess, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(infidelity, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(qsl_scan, m)?)?;
    m.add_function(wrap_pyfunction!(field_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(fit_beta_tau, m)?)?;
    Ok(())
}
