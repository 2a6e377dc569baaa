//! Ensemble-level contracts of the trajectory equations: averages over
//! trajectories must reproduce the matching master equations.

use std::sync::Arc;

use qsd_core::ensemble::{compare, novikov_check, run_ensemble, EnsembleAccumulator};
use qsd_core::kernels::{CoeffTable, Kernel};
use qsd_core::linalg::{pauli_basis, ComplexMatrix, ComplexVector, C64};
use qsd_core::master::{propagate, DensityMatrix, MasterScheme, MasterSeries};
use qsd_core::model::Model;
use qsd_core::noise::{sample_ou_path_with, trajectory_rng};
use qsd_core::obar::ObarScheme;
use qsd_core::qsd::{run_trajectory, step_linear_qsd, StageNoise, TrajectoryConfig, Unraveling};

fn amp(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn state(amps: &[C64]) -> ComplexVector {
    ComplexVector::normalized_from(amps.to_vec()).unwrap()
}

fn observables() -> Vec<ComplexMatrix> {
    let s = pauli_basis();
    vec![ComplexMatrix::identity(2), s.x, s.y, s.z]
}

struct Setup {
    model: Model,
    kernel: Kernel,
    psi0: ComplexVector,
    dt: f64,
    n_steps: usize,
    stride: usize,
}

impl Setup {
    fn table(&self) -> Arc<CoeffTable> {
        Arc::new(CoeffTable::for_steps(&self.kernel, self.dt, self.n_steps, false).unwrap())
    }

    fn trajectories(&self, unraveling: Unraveling) -> TrajectoryConfig {
        TrajectoryConfig::new(self.model.clone(), self.kernel.clone(), unraveling, self.psi0.clone(), self.dt, self.n_steps, self.stride).unwrap()
    }

    fn master(&self, scheme: &MasterScheme) -> MasterSeries {
        propagate(&self.model, scheme, &DensityMatrix::from_pure(&self.psi0).unwrap(), self.dt, self.n_steps, self.stride).unwrap()
    }
}

fn dissipative(gamma: f64) -> Setup {
    Setup {
        model: Model::dissipative(1.0, 1.0).unwrap(),
        kernel: Kernel::ornstein_uhlenbeck(gamma).unwrap(),
        psi0: state(&[amp(0.0, 1.0), amp(1.0, 0.0)]),
        dt: 0.01,
        n_steps: 500,
        stride: 10,
    }
}

fn driven(gamma: f64) -> Setup {
    Setup {
        model: Model::driven(1.0, 1.0).unwrap(),
        kernel: Kernel::ornstein_uhlenbeck(gamma).unwrap(),
        psi0: state(&[amp(3f64.sqrt(), 0.0), amp(1.0, 0.0)]),
        dt: 0.01,
        n_steps: 500,
        stride: 10,
    }
}

#[test]
fn linear_ensemble_reproduces_first_order_master() {
    let s = dissipative(10.0);
    let acc = run_ensemble(&s.trajectories(Unraveling::Linear(s.table())), &observables(), 5000, 17).unwrap();
    let report = compare(&acc, &s.master(&MasterScheme::FirstOrder(s.table()))).unwrap();
    let w = report.summary();
    assert!(w.max_abs_z < 5.0, "max |z| = {}", w.max_abs_z);
}

#[test]
fn nonlinear_ensembles_reproduce_first_order_master_for_both_models() {
    for (s, seed) in [(dissipative(10.0), 3), (driven(10.0), 4)] {
        let acc = run_ensemble(&s.trajectories(Unraveling::Nonlinear(ObarScheme::FirstOrder(s.table()))), &observables(), 1000, seed).unwrap();
        let report = compare(&acc, &s.master(&MasterScheme::FirstOrder(s.table()))).unwrap();
        assert!(report.summary().max_abs_z < 5.0, "max |z| = {}", report.summary().max_abs_z);
        for i in 0..acc.times().len() {
            let d = qsd_core::master::diagnostics(&acc.rho_hat(i));
            assert!(d.trace_error < 1e-9 && d.min_eigenvalue >= -1e-12);
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn median_norms(s: &Setup) -> Vec<f64> {
    let cfg = s.trajectories(Unraveling::Linear(s.table()));
    let records: Vec<_> = (0..500).map(|seed| run_trajectory(&cfg, seed, &[]).unwrap()).collect();
    (0..records[0].times.len()).map(|i| median(records.iter().map(|r| r.norms[i]).collect())).collect()
}

#[test]
fn median_linear_norm_trends_down() {
    let mut s = dissipative(10.0);
    s.stride = 50;
    let m = median_norms(&s);
    assert_eq!(m[0], 1.0);
    assert!(m[m.len() - 1] < 0.95);
    let n = m.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let m_mean = m.iter().sum::<f64>() / n;
    let slope: f64 = m.iter().enumerate().map(|(i, v)| (i as f64 - t_mean) * (v - m_mean)).sum();
    assert!(slope < 0.0, "{m:?}");

    // Without a dark state the norm keeps shrinking.
    let mut d = driven(10.0);
    d.stride = 100;
    let m = median_norms(&d);
    for pair in m.windows(2) {
        assert!(pair[1] < pair[0], "{m:?}");
    }
}

#[test]
fn linear_norm_statistics_are_blind_to_conjugating_the_noise() {
    let s = dissipative(10.0);
    let table = s.table();
    let n_paths = 3000;
    let mut plain = Vec::new();
    let mut flipped = Vec::new();
    let mut pathwise_differs = false;
    for p in 0..n_paths {
        let path = sample_ou_path_with(10.0, s.dt, s.n_steps, &mut trajectory_rng(99, p)).unwrap();
        let run = |conjugate: bool| {
            let mut psi = s.psi0.clone();
            for k in 0..s.n_steps {
                let (a, b) = (path.values[k], path.values[k + 1]);
                let noise = if conjugate { StageNoise { start: a.conj(), end: b.conj() } } else { StageNoise { start: a, end: b } };
                psi = step_linear_qsd(&psi, k as f64 * s.dt, &s.model, table.as_ref(), noise, s.dt).unwrap();
            }
            psi.norm_sqr()
        };
        let (x, y) = (run(false), run(true));
        pathwise_differs |= (x - y).abs() > 1e-6;
        plain.push(x);
        flipped.push(y);
    }
    assert!(pathwise_differs);
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt())
    };
    let (ma, sa) = stats(&plain);
    let (mb, sb) = stats(&flipped);
    assert!((ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt());
    assert!((ma - 1.0).abs() < 4.0 * sa, "M[|psi|^2] = {ma} +- {sa}");
    let below = |xs: &[f64], q: f64| xs.iter().filter(|x| **x < q).count() as f64 / xs.len() as f64;
    for q in [0.25, 0.5, 1.0] {
        let (fa, fb) = (below(&plain, q), below(&flipped, q));
        let se = (fa * (1.0 - fa) / n_paths as f64).sqrt().max(1e-3);
        assert!((fa - fb).abs() < 5.0 * se * 2f64.sqrt(), "fraction below {q}: {fa} vs {fb}");
    }
}

#[test]
fn hermitian_coupling_localizes_markov_trajectories() {
    let s = pauli_basis();
    let model = Model::new(ComplexMatrix::zeros(2), s.z.clone()).unwrap();
    let psi0 = state(&[amp(1.0, 0.0), amp(1.0, 0.0)]);
    let cfg = TrajectoryConfig::new(model, Kernel::Delta, Unraveling::Markov, psi0, 0.01, 1000, 100).unwrap();
    let spread: Vec<Vec<f64>> = (0..100)
        .map(|seed| run_trajectory(&cfg, seed, std::slice::from_ref(&s.z)).unwrap().values.iter().map(|v| 1.0 - v[0] * v[0]).collect())
        .collect();
    let mean_at = |i: usize| spread.iter().map(|r| r[i]).sum::<f64>() / spread.len() as f64;
    assert!((mean_at(0) - 1.0).abs() < 1e-12);
    assert!(mean_at(10) < 0.01, "{}", mean_at(10));
}

fn mean_gap_z(a: &EnsembleAccumulator, b: &EnsembleAccumulator, t_min: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &t) in a.times().iter().enumerate() {
        if t < t_min {
            continue;
        }
        for j in 0..a.observables().len() {
            let se = (a.standard_error(i, j).powi(2) + b.standard_error(i, j).powi(2)).sqrt();
            if se > 0.0 {
                worst = worst.max((a.mean(i, j) - b.mean(i, j)).abs() / se);
            }
        }
    }
    worst
}

#[test]
fn short_memory_first_order_trajectories_match_markov_trajectories() {
    let mut s = dissipative(100.0);
    s.dt = 1e-3;
    s.n_steps = 2000;
    s.stride = 100;
    let obs = observables()[1..].to_vec();
    let colored = run_ensemble(&s.trajectories(Unraveling::Nonlinear(ObarScheme::FirstOrder(s.table()))), &obs, 1000, 1).unwrap();
    let mut white = s.trajectories(Unraveling::Markov);
    white = TrajectoryConfig::new(white.model, Kernel::Delta, Unraveling::Markov, white.psi0, white.dt, white.n_steps, white.stride).unwrap();
    let markov = run_ensemble(&white, &obs, 1000, 2).unwrap();
    let z = mean_gap_z(&colored, &markov, 0.1);
    assert!(z < 4.5, "max |z| = {z}");
}

#[test]
fn standard_error_halves_when_trajectories_quadruple() {
    let s = driven(10.0);
    let cfg = s.trajectories(Unraveling::Nonlinear(ObarScheme::FirstOrder(s.table())));
    let obs = observables()[1..].to_vec();
    let small = run_ensemble(&cfg, &obs, 250, 5).unwrap();
    let large = run_ensemble(&cfg, &obs, 1000, 6).unwrap();
    let mut ratios = Vec::new();
    for i in 1..small.times().len() {
        for j in 0..obs.len() {
            ratios.push(small.standard_error(i, j) / large.standard_error(i, j));
        }
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean_ratio - 2.0).abs() < 0.4, "{mean_ratio}");
}

#[test]
fn long_memory_smoke_run() {
    let mut s = dissipative(1.0);
    s.psi0 = state(&[amp(3.0, 0.0), amp(1.0, 0.0)]);
    let rec = run_trajectory(&s.trajectories(Unraveling::Nonlinear(ObarScheme::FirstOrder(s.table()))), 7, &observables()).unwrap();
    assert_eq!(rec.times.len(), 51);
    assert!(rec.values.iter().flatten().all(|v| v.is_finite()));
    assert!((rec.values[0][1] - 0.6).abs() < 1e-12);
}

#[test]
fn novikov_relation_holds_at_weak_coupling() {
    let s = Setup { model: Model::dissipative(1.0, 0.3).unwrap(), n_steps: 200, ..dissipative(10.0) };
    let cfg = s.trajectories(Unraveling::Linear(s.table()));
    let report = novikov_check(&cfg, s.table().as_ref(), 2000, 12).unwrap();
    assert!(report.max_abs_z() < 4.0, "{}", report.max_abs_z());
    let first = &report.points[0];
    assert_eq!(first.t, 0.0);
    assert_eq!(first.rhs.max_abs(), 0.0);
}
