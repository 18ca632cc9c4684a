use proptest::prelude::*;
use qsl_core::dynamics::{
    infidelity, mt_bound, populations, propagate, ControlField, QuantumState, TimeGrid,
};
use qsl_core::linalg::C64;
use qsl_core::model::{build_hamiltonian, SystemSpec};

fn rhs(h: &qsl_core::linalg::HermitianMatrix, psi: &[C64]) -> Vec<C64> {
    h.apply(psi).into_iter().map(|z| z * C64::new(0.0, -1.0)).collect()
}

fn axpy(a: &[C64], s: f64, b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x + y * s).collect()
}

/// Classical RK4 on each constant-field interval.
fn rk4(spec: &SystemSpec, field: &ControlField, psi0: &[C64], substeps: usize) -> Vec<C64> {
    let mut psi = psi0.to_vec();
    let h = field.grid.dt() / substeps as f64;
    for &lambda in &field.values {
        let ham = build_hamiltonian(spec, lambda).unwrap();
        for _ in 0..substeps {
            let k1 = rhs(&ham, &psi);
            let k2 = rhs(&ham, &axpy(&psi, h / 2.0, &k1));
            let k3 = rhs(&ham, &axpy(&psi, h / 2.0, &k2));
            let k4 = rhs(&ham, &axpy(&psi, h, &k3));
            for i in 0..psi.len() {
                psi[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
    }
    psi
}

fn wiggly(spec: &SystemSpec, duration: f64, n: usize) -> ControlField {
    let eps0 = spec.spacing;
    ControlField::from_fn(TimeGrid::new(duration, n).unwrap(), |t| {
        eps0 * (t / duration) + 0.7 * (3.1 * t).sin()
    })
    .unwrap()
}

#[test]
fn matches_fine_rk4() {
    let spec = SystemSpec::three_level(1.0, 0.7, 4.0).unwrap();
    let field = wiggly(&spec, 5.0, 250);
    let psi0 = QuantumState::basis(3, 0).unwrap();
    let exact = propagate(&spec, &field, &psi0).unwrap();
    let reference = rk4(&spec, &field, psi0.amplitudes(), 100);
    for (a, b) in exact.final_state().amplitudes().iter().zip(&reference) {
        assert!((a - b).norm() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn rabi_closed_form() {
    let gap = 1.7;
    let spec = SystemSpec::uniform(2, gap, 10.0).unwrap();
    let duration = 2.0 * std::f64::consts::PI / gap;
    let field = ControlField::constant(TimeGrid::new(duration, 400).unwrap(), 0.0).unwrap();
    let traj = propagate(&spec, &field, &QuantumState::basis(2, 0).unwrap()).unwrap();
    for (t, p) in field.grid.times().iter().zip(populations(&traj)) {
        let expect = (gap * t / 2.0).sin().powi(2);
        assert!((p[1] - expect).abs() < 1e-10);
    }
    // half period transfers completely
    let half = ControlField::constant(TimeGrid::new(duration / 2.0, 1).unwrap(), 0.0).unwrap();
    let fin = propagate(&spec, &half, &QuantumState::basis(2, 0).unwrap()).unwrap();
    let inf = infidelity(fin.final_state(), &QuantumState::basis(2, 1).unwrap()).unwrap();
    assert!(inf < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn norm_is_preserved(
        n in 2usize..=6,
        eps0 in 1.0f64..30.0,
        values in prop::collection::vec(-40.0f64..60.0, 20..120),
        phases in prop::collection::vec(0.0f64..6.3, 6),
    ) {
        let spec = SystemSpec::uniform(n, 1.0, eps0).unwrap();
        let m = values.len();
        let field = ControlField::new(TimeGrid::new(0.05 * m as f64, m).unwrap(), values).unwrap();
        let raw: Vec<C64> = (0..n).map(|k| C64::from_polar(1.0, phases[k])).collect();
        let norm = (n as f64).sqrt();
        let psi0 = QuantumState::new(raw.iter().map(|z| z / norm).collect()).unwrap();
        let traj = propagate(&spec, &field, &psi0).unwrap();
        for s in &traj.states {
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn refining_a_piecewise_field_changes_nothing() {
    let spec = SystemSpec::three_level(1.0, 1.0, 6.0).unwrap();
    let coarse = wiggly(&spec, 4.0, 80);
    let doubled: Vec<f64> = coarse.values.iter().flat_map(|&v| [v, v]).collect();
    let fine = ControlField::new(TimeGrid::new(4.0, 160).unwrap(), doubled).unwrap();
    let psi0 = QuantumState::basis(3, 1).unwrap();
    let a = propagate(&spec, &coarse, &psi0).unwrap();
    let b = propagate(&spec, &fine, &psi0).unwrap();
    for (x, y) in a.final_state().amplitudes().iter().zip(b.final_state().amplitudes()) {
        assert!((x - y).norm() < 1e-12);
    }
}

#[test]
fn time_reversal_returns_conjugate() {
    let spec = SystemSpec::three_level(1.0, 0.5, 5.0).unwrap();
    let field = wiggly(&spec, 6.0, 300);
    let psi0 = QuantumState::basis(3, 0).unwrap();
    let fwd = propagate(&spec, &field, &psi0).unwrap();
    let reversed: Vec<f64> = field.values.iter().rev().copied().collect();
    let back_field = ControlField::new(field.grid, reversed).unwrap();
    let conj = QuantumState::new(fwd.final_state().amplitudes().iter().map(|z| z.conj()).collect())
        .unwrap();
    let back = propagate(&spec, &back_field, &conj).unwrap();
    for (x, y) in back.final_state().amplitudes().iter().zip(psi0.amplitudes()) {
        assert!((x.conj() - y).norm() < 1e-12);
    }
}

#[test]
fn mt_bound_two_level_is_pi_over_gap() {
    for gap in [0.3, 1.0, 2.5] {
        let spec = SystemSpec::uniform(2, gap, 10.0).unwrap();
        let t = mt_bound(
            &spec,
            0.0,
            &QuantumState::basis(2, 0).unwrap(),
            &QuantumState::basis(2, 1).unwrap(),
        )
        .unwrap();
        assert!((t - std::f64::consts::PI / gap).abs() < 1e-12);
    }
}

#[test]
fn mt_bound_from_moments() {
    let spec = SystemSpec::three_level(1.0, 0.6, 10.0).unwrap();
    let lambda = 3.0;
    let c = C64::new(0.6, 0.0);
    let psi = QuantumState::new(vec![c, C64::new(0.0, 0.8), C64::new(0.0, 0.0)]).unwrap();
    let goal = QuantumState::basis(3, 2).unwrap();
    // ⟨H⟩, ⟨H²⟩ written out for the tridiagonal matrix
    let d = spec.diagonal(lambda);
    let (g0, g1) = (spec.gaps[0] / 2.0, spec.gaps[1] / 2.0);
    let a = psi.amplitudes();
    let hpsi = [
        a[0] * d[0] + a[1] * g0,
        a[0] * g0 + a[1] * d[1] + a[2] * g1,
        a[1] * g1 + a[2] * d[2],
    ];
    let mean: f64 = a.iter().zip(&hpsi).map(|(x, y)| (x.conj() * y).re).sum();
    let second: f64 = hpsi.iter().map(|z| z.norm_sqr()).sum();
    let spread = (second - mean * mean).sqrt();
    let expect = goal.overlap(&psi).norm().acos() / spread;
    let got = mt_bound(&spec, lambda, &psi, &goal).unwrap();
    assert!((got - expect).abs() < 1e-10 * expect);
}

#[test]
fn landau_zener_sweep() {
    // diabatic survival after a linear sweep through one crossing
    let gap = 1.0;
    let spec = SystemSpec::uniform(2, gap, 10.0).unwrap();
    let psi0 = QuantumState::basis(2, 0).unwrap();
    for rate in [0.5, 1.0, 2.0] {
        let span = 400.0;
        let duration = 2.0 * span / rate;
        let m = (duration / 0.01) as usize;
        let field =
            ControlField::from_fn(TimeGrid::new(duration, m).unwrap(), |t| -span + rate * t).unwrap();
        let traj = propagate(&spec, &field, &psi0).unwrap();
        let survival = traj.final_state().populations()[0];
        let expect = (-2.0 * std::f64::consts::PI * (gap / 2.0).powi(2) / rate).exp();
        assert!((survival - expect).abs() < 0.01, "rate {rate}: {survival} vs {expect}");
    }
}

#[test]
fn slow_sweep_follows_ground_state() {
    let spec = SystemSpec::uniform(2, 1.0, 10.0).unwrap();
    let duration = 400.0;
    let field = ControlField::from_fn(TimeGrid::new(duration, 40000).unwrap(), |t| {
        -20.0 + 40.0 * t / duration
    })
    .unwrap();
    let traj = propagate(&spec, &field, &QuantumState::basis(2, 0).unwrap()).unwrap();
    assert!(traj.final_state().populations()[1] > 1.0 - 1e-3);
}
