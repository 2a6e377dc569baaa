//! Structural and positivity properties of the master-equation propagators.

use std::sync::Arc;

use qsd_core::kernels::{qbm_coeff_table, CoeffTable, Kernel, QbmTable};
use qsd_core::linalg::{pauli_basis, ComplexMatrix, ComplexVector, C64};
use qsd_core::master::{diagnostics, harmonic_oscillator, propagate, DensityMatrix, MasterScheme};
use qsd_core::model::Model;

fn bloch_state(theta: f64, phi: f64) -> ComplexVector {
    ComplexVector::normalized_from(vec![C64::new((0.5 * theta).cos(), 0.0), C64::from_polar((0.5 * theta).sin(), phi)]).unwrap()
}

/// Squeezed vacuum `S(r)|0⟩` on `n_levels` Fock states; `r > 0` squeezes position.
fn squeezed_vacuum(n_levels: usize, r: f64) -> ComplexVector {
    let mut amps = vec![C64::new(0.0, 0.0); n_levels];
    let mut c = 1.0 / r.cosh().sqrt();
    let mut n = 0;
    while 2 * n < n_levels {
        amps[2 * n] = C64::new(c, 0.0);
        c *= -r.tanh() * (((2 * n + 1) * (2 * n + 2)) as f64).sqrt() / (2 * (n + 1)) as f64;
        n += 1;
    }
    ComplexVector::normalized_from(amps).unwrap()
}

fn worst_structure(model: &Model, scheme: &MasterScheme, rho0: &DensityMatrix, dt: f64, n_steps: usize) -> (f64, f64) {
    let series = propagate(model, scheme, rho0, dt, n_steps, 100).unwrap();
    series.states.iter().fold((0.0f64, 0.0f64), |(t, h), r| {
        let d = r.diagnostics();
        (t.max(d.trace_error), h.max(d.hermiticity_error))
    })
}

#[test]
fn every_variant_preserves_trace_and_hermiticity_over_ten_thousand_steps() {
    let n = 10_000;
    let dt = 1e-3;
    let kernel = Kernel::ornstein_uhlenbeck(2.0).unwrap();
    let table = Arc::new(CoeffTable::for_steps(&kernel, dt, n, false).unwrap());
    let rho0 = DensityMatrix::from_pure(&bloch_state(1.1, 0.4)).unwrap();
    for model in [Model::dissipative(1.0, 1.0).unwrap(), Model::driven(1.0, 1.0).unwrap()] {
        let mut schemes = vec![
            MasterScheme::Lindblad,
            MasterScheme::FirstOrder(table.clone()),
            MasterScheme::long_time(&kernel).unwrap(),
            MasterScheme::functional_zeroth(&kernel).unwrap(),
        ];
        if let Ok(exact) = MasterScheme::exact_dissipative(&model, &kernel) {
            schemes.push(exact);
        }
        for scheme in &schemes {
            let (tr, herm) = worst_structure(&model, scheme, &rho0, dt, n);
            assert!(tr < 1e-9 && herm < 1e-10, "{}: {tr:e} {herm:e}", scheme.name());
        }
    }

    let ohmic = Kernel::ohmic(0.1, 20.0, 50.0).unwrap();
    let coeffs = Arc::new(QbmTable::new(&ohmic, 0.5e-3, 2 * 2000 + 1).unwrap());
    let (model, p) = harmonic_oscillator(12, 1.0, 0.1 * 20.0 / std::f64::consts::PI).unwrap();
    let rho0 = DensityMatrix::from_pure(&squeezed_vacuum(12, 0.2)).unwrap();
    for scheme in [
        MasterScheme::QbmZeroth(coeffs.clone()),
        MasterScheme::QbmFirst { coeffs: coeffs.clone(), p: p.clone() },
        MasterScheme::CaldeiraLeggett { eta: 0.1, kt: 1.0, p: p.clone() },
    ] {
        let (tr, herm) = worst_structure(&model, &scheme, &rho0, 1e-3, 2000);
        assert!(tr < 1e-9 && herm < 1e-10, "{}: {tr:e} {herm:e}", scheme.name());
    }
}

#[test]
fn first_order_master_stays_positive_for_the_driven_model() {
    let model = Model::driven(1.0, 1.0).unwrap();
    let dt = 0.01;
    let n = 1000;
    for gamma in [0.5, 1.0, 10.0] {
        let kernel = Kernel::ornstein_uhlenbeck(gamma).unwrap();
        let scheme = MasterScheme::FirstOrder(Arc::new(CoeffTable::for_steps(&kernel, dt, n, false).unwrap()));
        let mut worst = f64::INFINITY;
        for i in 0..10 {
            for j in 0..10 {
                let theta = std::f64::consts::PI * i as f64 / 9.0;
                let phi = 2.0 * std::f64::consts::PI * j as f64 / 10.0;
                let rho0 = DensityMatrix::from_pure(&bloch_state(theta, phi)).unwrap();
                let series = propagate(&model, &scheme, &rho0, dt, n, 5).unwrap();
                worst = series.states.iter().map(|r| r.diagnostics().min_eigenvalue).fold(worst, f64::min);
            }
        }
        assert!(worst >= -1e-6, "gamma = {gamma}: {worst:e}");
    }
}

#[test]
fn long_time_equation_stays_positive_for_the_dissipative_model() {
    let model = Model::dissipative(1.0, 1.0).unwrap();
    let scheme = MasterScheme::long_time(&Kernel::ornstein_uhlenbeck(0.5).unwrap()).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            let rho0 = DensityMatrix::from_pure(&bloch_state(std::f64::consts::PI * i as f64 / 9.0, 0.6 * j as f64)).unwrap();
            let series = propagate(&model, &scheme, &rho0, 0.01, 1000, 5).unwrap();
            for r in &series.states {
                let d = r.diagnostics();
                assert!(d.min_eigenvalue >= -1e-9 && d.bloch_norm.unwrap() <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn caldeira_leggett_loses_positivity_for_a_squeezed_state() {
    let n_levels = 40;
    let (model, p) = harmonic_oscillator(n_levels, 1.0, 0.0).unwrap();
    let mut witness = None;
    'scan: for r in [0.3, -0.3, 0.6, -0.6, 0.9, -0.9] {
        for kt in [0.0, 0.1, 1.0] {
            let scheme = MasterScheme::CaldeiraLeggett { eta: 0.1, kt, p: p.clone() };
            let rho0 = DensityMatrix::from_pure(&squeezed_vacuum(n_levels, r)).unwrap();
            let series = propagate(&model, &scheme, &rho0, 1e-3, 1000, 10).unwrap();
            let min = series.states.iter().map(|s| s.diagnostics().min_eigenvalue).fold(f64::INFINITY, f64::min);
            if min < -1e-3 && !series.untrusted {
                witness = Some((r, kt, min));
                break 'scan;
            }
        }
    }
    let (r, kt, min) = witness.expect("no squeezing in the scan violates positivity");
    println!("witness: r = {r}, kT = {kt}, min eigenvalue = {min:e}");
}

#[test]
fn zeroth_order_oscillator_equation_stays_positive_for_squeezed_states() {
    let ohmic = Kernel::ohmic(0.1, 20.0, 0.0).unwrap();
    let coeffs = Arc::new(QbmTable::new(&ohmic, 0.5e-3, 2 * 1000 + 1).unwrap());
    let (model, _) = harmonic_oscillator(30, 1.0, 0.1 * 20.0 / std::f64::consts::PI).unwrap();
    for r in [0.3, -0.6] {
        let rho0 = DensityMatrix::from_pure(&squeezed_vacuum(30, r)).unwrap();
        let series = propagate(&model, &MasterScheme::QbmZeroth(coeffs.clone()), &rho0, 1e-3, 1000, 10).unwrap();
        for s in &series.states {
            assert!(diagnostics(s.matrix()).min_eigenvalue >= -1e-8);
        }
    }
}

#[test]
fn friction_coefficient_carries_the_caldeira_leggett_sign() {
    let kernel = Kernel::ohmic(0.1, 20.0, 50.0).unwrap();
    let grid: Vec<f64> = (0..=100).map(|k| 0.25 + k as f64 * 0.25 / 100.0).collect();
    let rows = qbm_coeff_table(&kernel, &grid).unwrap();
    let mean_g1i = rows.iter().map(|r| r.g1i).sum::<f64>() / rows.len() as f64;
    let mean_g0r = rows.iter().map(|r| r.g0r).sum::<f64>() / rows.len() as f64;
    assert!(mean_g1i < 0.0);
    assert!((mean_g1i + 0.05).abs() < 0.3 * 0.05, "{mean_g1i}");
    assert!((mean_g0r - 5.0).abs() < 0.05 * 5.0, "{mean_g0r}");
}

#[test]
fn uncoupled_propagation_keeps_the_spectrum() {
    let s = pauli_basis();
    let model = Model::new(s.x.scale_real(0.7), ComplexMatrix::zeros(2)).unwrap();
    let rho0 = DensityMatrix::new(ComplexMatrix::from_rows([
        [C64::new(0.7, 0.0), C64::new(0.1, 0.2)],
        [C64::new(0.1, -0.2), C64::new(0.3, 0.0)],
    ]))
    .unwrap();
    let start = rho0.diagnostics().min_eigenvalue;
    for s in &propagate(&model, &MasterScheme::Lindblad, &rho0, 0.01, 500, 50).unwrap().states {
        assert!((s.diagnostics().min_eigenvalue - start).abs() < 1e-9);
    }
}
