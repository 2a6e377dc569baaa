//! Monte Carlo averages over trajectories and comparison with master-equation
//! references.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::kernels::CoefficientSource;
use crate::linalg::{trace_distance, ComplexMatrix, ComplexVector, C64};
use crate::master::{DensityMatrix, MasterSeries};
use crate::noise::trajectory_rng;
use crate::obar::obar_first_order;
use crate::qsd::{simulate, TrajectoryConfig, Unraveling};

/// Trajectories per reduction chunk. Ensembles are always summed chunk by
/// chunk in index order, so serial and parallel runs agree bit for bit.
pub const CHUNK_SIZE: u64 = 64;

/// Running sums of observables and of `|ψ⟩⟨ψ|` on an output grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    observables: Vec<ComplexMatrix>,
    n: usize,
    failed: usize,
    /// `sum[i * n_obs + j]` accumulates observable `j` at time `i`.
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    rho_sum: Vec<ComplexMatrix>,
}

impl EnsembleAccumulator {
    pub fn new(times: Vec<f64>, observables: Vec<ComplexMatrix>, dim: usize) -> Result<Self> {
        if let Some(a) = observables.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: a.dim() });
        }
        let cells = times.len() * observables.len();
        Ok(Self {
            rho_sum: vec![ComplexMatrix::zeros(dim); times.len()],
            times,
            observables,
            n: 0,
            failed: 0,
            sum: vec![0.0; cells],
            sum_sq: vec![0.0; cells],
        })
    }

    /// Empty accumulator on the same grid with the same observables.
    pub fn empty_like(&self) -> Self {
        Self::new(self.times.clone(), self.observables.clone(), self.dim()).expect("same shape")
    }

    pub fn dim(&self) -> usize {
        self.rho_sum.first().map_or(0, |r| r.dim())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observables(&self) -> &[ComplexMatrix] {
        &self.observables
    }

    /// Completed trajectories.
    pub fn n_trajectories(&self) -> usize {
        self.n
    }

    pub fn n_failed(&self) -> usize {
        self.failed
    }

    fn add_sample(&mut self, index: usize, psi: &ComplexVector) -> Result<()> {
        let n_obs = self.observables.len();
        for (j, a) in self.observables.iter().enumerate() {
            let v = psi.inner(&a.apply(psi)?).re;
            self.sum[index * n_obs + j] += v;
            self.sum_sq[index * n_obs + j] += v * v;
        }
        self.rho_sum[index] += &psi.projector();
        Ok(())
    }

    /// Adds the sums of `other`, which must share the grid.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        check_grids(&self.times, &other.times)?;
        if self.observables.len() != other.observables.len() || self.dim() != other.dim() {
            return Err(invalid("accumulator", "observable sets differ"));
        }
        self.n += other.n;
        self.failed += other.failed;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.rho_sum.iter_mut().zip(&other.rho_sum) {
            *a += b;
        }
        Ok(())
    }

    pub fn mean(&self, time_index: usize, observable: usize) -> f64 {
        self.sum[time_index * self.observables.len() + observable] / self.n as f64
    }

    /// Sample standard deviation over `√n`; zero for a single trajectory.
    pub fn standard_error(&self, time_index: usize, observable: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let k = time_index * self.observables.len() + observable;
        let n = self.n as f64;
        let var = ((self.sum_sq[k] - self.sum[k] * self.sum[k] / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    /// `(1/n) Σ |ψ⟩⟨ψ|` at output time `time_index`.
    pub fn rho_hat(&self, time_index: usize) -> ComplexMatrix {
        self.rho_sum[time_index].scale_real(1.0 / self.n as f64)
    }

    /// The reconstructed density matrices as a master-equation style series.
    pub fn as_series(&self) -> Result<MasterSeries> {
        let states = (0..self.times.len()).map(|i| DensityMatrix::new(self.rho_hat(i).hermitian_part())).collect::<Result<_>>()?;
        Ok(MasterSeries { times: self.times.clone(), states, untrusted: false })
    }

    /// Fails when more than 1% of the attempted trajectories aborted.
    pub fn ensure_success_rate(&self) -> Result<()> {
        let total = self.n + self.failed;
        if self.failed * 100 > total || self.n == 0 {
            return Err(Error::TooManyFailures { failed: self.failed, total });
        }
        Ok(())
    }
}

fn check_grids(left: &[f64], right: &[f64]) -> Result<()> {
    if left.len() != right.len() {
        let index = left.len().min(right.len());
        return Err(Error::GridMismatch { index, left: left.get(index).copied().unwrap_or(f64::NAN), right: right.get(index).copied().unwrap_or(f64::NAN) });
    }
    for (index, (a, b)) in left.iter().zip(right).enumerate() {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::GridMismatch { index, left: *a, right: *b });
        }
    }
    Ok(())
}

fn single_trajectory(cfg: &TrajectoryConfig, template: &EnsembleAccumulator, master_seed: u64, index: u64) -> Result<EnsembleAccumulator> {
    let mut acc = template.empty_like();
    let mut rng = trajectory_rng(master_seed, index);
    simulate(cfg, &mut rng, |s| acc.add_sample(s.index, s.psi))?;
    acc.n = 1;
    Ok(acc)
}

/// Runs trajectories `range` of the family seeded by `master_seed`.
/// Aborted trajectories are counted, not propagated.
pub fn run_ensemble_range(cfg: &TrajectoryConfig, observables: &[ComplexMatrix], master_seed: u64, range: Range<u64>) -> Result<EnsembleAccumulator> {
    let mut acc = EnsembleAccumulator::new(cfg.output_times(), observables.to_vec(), cfg.model.dim())?;
    for index in range {
        match single_trajectory(cfg, &acc, master_seed, index) {
            Ok(one) => acc.merge(&one)?,
            Err(Error::NonFinite { .. }) => acc.failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(acc)
}

/// Index ranges of the reduction chunks for `n_traj` trajectories.
pub fn chunks(n_traj: u64) -> impl Iterator<Item = Range<u64>> {
    (0..n_traj.div_ceil(CHUNK_SIZE)).map(move |c| c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(n_traj))
}

/// Runs `n_traj` trajectories serially. Trajectory `k` draws from
/// `trajectory_rng(master_seed, k)`.
pub fn run_ensemble(cfg: &TrajectoryConfig, observables: &[ComplexMatrix], n_traj: u64, master_seed: u64) -> Result<EnsembleAccumulator> {
    if n_traj == 0 {
        return Err(invalid("n_traj", "must be at least 1"));
    }
    let mut acc = EnsembleAccumulator::new(cfg.output_times(), observables.to_vec(), cfg.model.dim())?;
    for range in chunks(n_traj) {
        acc.merge(&run_ensemble_range(cfg, observables, master_seed, range)?)?;
    }
    acc.ensure_success_rate()?;
    Ok(acc)
}

/// Pointwise agreement between an ensemble and a reference series.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `mean[i][j]` for time `i` and observable `j`; likewise below.
    pub mean: Vec<Vec<f64>>,
    pub standard_error: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// `½‖ρ̂ − ρ_ref‖₁` per time.
    pub trace_distance: Vec<f64>,
}

/// Maxima of a report over a time window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSummary {
    pub max_abs_z: f64,
    pub max_abs_deviation: f64,
    pub max_trace_distance: f64,
}

impl ComparisonReport {
    pub fn summary(&self) -> WindowSummary {
        self.window(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Maxima over `t_min ≤ t ≤ t_max`, optionally for a subset of observables.
    pub fn window(&self, t_min: f64, t_max: f64) -> WindowSummary {
        self.window_for(t_min, t_max, None)
    }

    pub fn window_for(&self, t_min: f64, t_max: f64, observable: Option<usize>) -> WindowSummary {
        let mut s = WindowSummary { max_abs_z: 0.0, max_abs_deviation: 0.0, max_trace_distance: 0.0 };
        for (i, &t) in self.times.iter().enumerate() {
            if t < t_min - 1e-12 || t > t_max + 1e-12 {
                continue;
            }
            for j in 0..self.mean[i].len() {
                if observable.is_some_and(|o| o != j) {
                    continue;
                }
                s.max_abs_z = s.max_abs_z.max(self.z[i][j].abs());
                s.max_abs_deviation = s.max_abs_deviation.max((self.mean[i][j] - self.reference[i][j]).abs());
            }
            s.max_trace_distance = s.max_trace_distance.max(self.trace_distance[i]);
        }
        s
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Compares ensemble means and `ρ̂` against a reference series on the same grid.
pub fn compare(acc: &EnsembleAccumulator, reference: &MasterSeries) -> Result<ComparisonReport> {
    check_grids(acc.times(), &reference.times)?;
    if acc.n_trajectories() == 0 {
        return Err(invalid("accumulator", "holds no trajectories"));
    }
    let n_obs = acc.observables().len();
    let mut report = ComparisonReport {
        times: acc.times().to_vec(),
        mean: Vec::new(),
        standard_error: Vec::new(),
        reference: Vec::new(),
        z: Vec::new(),
        trace_distance: Vec::new(),
    };
    for (i, rho_ref) in reference.states.iter().enumerate() {
        let mean: Vec<f64> = (0..n_obs).map(|j| acc.mean(i, j)).collect();
        let se: Vec<f64> = (0..n_obs).map(|j| acc.standard_error(i, j)).collect();
        let refs: Vec<f64> = acc.observables().iter().map(|a| rho_ref.expect(a).re).collect();
        report.z.push((0..n_obs).map(|j| z_score(mean[j] - refs[j], se[j])).collect());
        report.trace_distance.push(trace_distance(&acc.rho_hat(i).hermitian_part(), rho_ref.matrix())?);
        report.mean.push(mean);
        report.standard_error.push(se);
        report.reference.push(refs);
    }
    Ok(report)
}

/// Per-time outcome of the Novikov-type check.
#[derive(Clone, Debug, PartialEq)]
pub struct NovikovPoint {
    pub t: f64,
    /// Ensemble mean of `P_t z_t` with `P_t = |ψ_t⟩⟨ψ_t|`.
    pub lhs: ComplexMatrix,
    /// Ensemble mean of `P_t Ō(t)†`.
    pub rhs: ComplexMatrix,
    /// Largest entrywise |z-score| of `lhs − rhs`, real and imaginary parts separately.
    pub max_abs_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NovikovReport {
    pub n_traj: u64,
    pub points: Vec<NovikovPoint>,
}

impl NovikovReport {
    pub fn max_abs_z(&self) -> f64 {
        self.points.iter().map(|p| p.max_abs_z).fold(0.0, f64::max)
    }
}

/// Statistical check of `M[P_t z_t] = ∫ds α(t,s)* M[P_t Ô(t,s)†]` on linear
/// trajectories. With the first-order `Ô(t,s)` the right side collapses to
/// `M[P_t] Ō(t)†` for real kernels. The result is advisory: the `Ô` used is
/// itself a truncation.
pub fn novikov_check(cfg: &TrajectoryConfig, coeffs: &dyn CoefficientSource, n_traj: u64, master_seed: u64) -> Result<NovikovReport> {
    if !matches!(cfg.unraveling, Unraveling::Linear(_)) {
        return Err(Error::Unsupported { what: "the Novikov check", requirement: "linear trajectories" });
    }
    if n_traj < 2 {
        return Err(invalid("n_traj", "needs at least two trajectories"));
    }
    let times = cfg.output_times();
    let obar_dag: Vec<ComplexMatrix> =
        times.iter().map(|&t| Ok(obar_first_order(&cfg.model, &coeffs.first_order(t)?).dagger())).collect::<Result<_>>()?;
    let dim = cfg.model.dim();
    let cells = dim * dim;
    let mut lhs = vec![vec![C64::new(0.0, 0.0); cells]; times.len()];
    let mut rhs = lhs.clone();
    let mut diff_sq = vec![vec![(0.0, 0.0); cells]; times.len()];
    for index in 0..n_traj {
        let mut rng = trajectory_rng(master_seed, index);
        simulate(cfg, &mut rng, |s| {
            let p = s.psi.projector();
            let right = &p * &obar_dag[s.index];
            for k in 0..cells {
                let l = p.as_slice()[k] * s.z;
                let r = right.as_slice()[k];
                let d = l - r;
                lhs[s.index][k] += l;
                rhs[s.index][k] += r;
                diff_sq[s.index][k].0 += d.re * d.re;
                diff_sq[s.index][k].1 += d.im * d.im;
            }
            Ok(())
        })?;
    }
    let n = n_traj as f64;
    let points = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut max_abs_z = 0.0f64;
            for k in 0..cells {
                let d = (lhs[i][k] - rhs[i][k]) / n;
                let var_re = ((diff_sq[i][k].0 - n * d.re * d.re) / (n - 1.0)).max(0.0);
                let var_im = ((diff_sq[i][k].1 - n * d.im * d.im) / (n - 1.0)).max(0.0);
                max_abs_z = max_abs_z.max(z_score(d.re, (var_re / n).sqrt()).abs()).max(z_score(d.im, (var_im / n).sqrt()).abs());
            }
            let mean = |m: &[C64]| ComplexMatrix::from_vec(dim, m.iter().map(|x| x / n).collect()).expect("square");
            NovikovPoint { t, lhs: mean(&lhs[i]), rhs: mean(&rhs[i]), max_abs_z }
        })
        .collect();
    Ok(NovikovReport { n_traj, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoeffTable, Kernel};
    use crate::linalg::{c, min_eigenvalue, pauli_basis, re};
    use crate::master::{propagate, MasterScheme};
    use crate::model::Model;
    use crate::obar::ObarScheme;
    use crate::qsd::run_trajectory;
    use alloc::sync::Arc;

    fn sigmas() -> Vec<ComplexMatrix> {
        let s = pauli_basis();
        vec![s.x, s.y, s.z]
    }

    fn fig1_config(n_steps: usize) -> TrajectoryConfig {
        let k = Kernel::ornstein_uhlenbeck(10.0).unwrap();
        let psi0 = ComplexVector::normalized_from(vec![I_, re(1.0)]).unwrap();
        TrajectoryConfig::new(Model::dissipative(1.0, 1.0).unwrap(), k.clone(), Unraveling::Nonlinear(ObarScheme::first_order(k)), psi0, 0.01, n_steps, 10).unwrap()
    }

    const I_: C64 = C64::new(0.0, 1.0);

    #[test]
    fn single_trajectory_ensemble_matches_run_trajectory() {
        let cfg = fig1_config(50);
        let acc = run_ensemble(&cfg, &sigmas(), 1, 7).unwrap();
        let rec = run_trajectory(&cfg, 7, &sigmas()).unwrap();
        assert_eq!(acc.times(), rec.times.as_slice());
        for i in 0..rec.times.len() {
            for j in 0..3 {
                assert_eq!(acc.mean(i, j), rec.values[i][j]);
                assert_eq!(acc.standard_error(i, j), 0.0);
            }
        }
    }

    #[test]
    fn seed_reproducibility_and_chunking() {
        let cfg = fig1_config(30);
        let a = run_ensemble(&cfg, &sigmas(), 100, 3).unwrap();
        let b = run_ensemble(&cfg, &sigmas(), 100, 3).unwrap();
        assert_eq!(a, b);
        let mut c = run_ensemble_range(&cfg, &sigmas(), 3, 0..64).unwrap();
        c.merge(&run_ensemble_range(&cfg, &sigmas(), 3, 64..100).unwrap()).unwrap();
        assert_eq!(a, c);
        assert_eq!(chunks(130).collect::<Vec<_>>(), vec![0..64, 64..128, 128..130]);
    }

    #[test]
    fn rho_hat_is_a_density_matrix() {
        let cfg = fig1_config(100);
        let acc = run_ensemble(&cfg, &sigmas(), 40, 11).unwrap();
        for i in 0..acc.times().len() {
            let r = acc.rho_hat(i);
            assert!((r.trace().re - 1.0).abs() < 1e-9);
            assert!(min_eigenvalue(&r.hermitian_part()) >= -1e-12);
        }
    }

    #[test]
    fn self_comparison_has_zero_scores() {
        let cfg = fig1_config(60);
        let acc = run_ensemble(&cfg, &sigmas(), 30, 5).unwrap();
        let report = compare(&acc, &acc.as_series().unwrap()).unwrap();
        let s = report.summary();
        assert!(s.max_abs_z < 1e-9, "{s:?}");
        assert!(s.max_trace_distance < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let cfg = fig1_config(60);
        let acc = run_ensemble(&cfg, &sigmas(), 2, 5).unwrap();
        let m = Model::dissipative(1.0, 1.0).unwrap();
        let rho = DensityMatrix::from_pure(&cfg.psi0).unwrap();
        let series = propagate(&m, &MasterScheme::Lindblad, &rho, 0.02, 60, 10).unwrap();
        assert!(matches!(compare(&acc, &series), Err(Error::GridMismatch { index: 1, .. })));
    }

    #[test]
    fn failure_threshold() {
        let template = fig1_config(1);
        let mut acc = EnsembleAccumulator::new(template.output_times(), sigmas(), 2).unwrap();
        acc.n = 99;
        acc.failed = 1;
        assert!(acc.ensure_success_rate().is_ok());
        acc.failed = 2;
        assert!(matches!(acc.ensure_success_rate(), Err(Error::TooManyFailures { failed: 2, total: 101 })));
    }

    #[test]
    fn markov_ensemble_tracks_lindblad() {
        let m = Model::dissipative(1.0, 1.0).unwrap();
        let psi0 = ComplexVector::normalized_from(vec![re(1.0), re(1.0)]).unwrap();
        let cfg = TrajectoryConfig::new(m.clone(), Kernel::Delta, Unraveling::Markov, psi0.clone(), 0.005, 400, 40).unwrap();
        let acc = run_ensemble(&cfg, &sigmas(), 400, 1).unwrap();
        let series = propagate(&m, &MasterScheme::Lindblad, &DensityMatrix::from_pure(&psi0).unwrap(), 0.005, 400, 40).unwrap();
        let s = compare(&acc, &series).unwrap().summary();
        assert!(s.max_abs_z < 4.5, "{s:?}");
    }

    #[test]
    fn novikov_trivial_cases() {
        let k = Kernel::ornstein_uhlenbeck(10.0).unwrap();
        let table = Arc::new(CoeffTable::for_steps(&k, 0.01, 100, false).unwrap());
        let psi0 = ComplexVector::normalized_from(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let uncoupled = Model::dissipative(1.0, 0.0).unwrap();
        let cfg = TrajectoryConfig::new(uncoupled, k.clone(), Unraveling::Linear(table.clone()), psi0.clone(), 0.01, 100, 20).unwrap();
        let report = novikov_check(&cfg, table.as_ref(), 200, 2).unwrap();
        assert!(report.max_abs_z() < 4.5);
        assert!(report.points.iter().all(|p| p.rhs.max_abs() == 0.0));
        let coupled = TrajectoryConfig::new(Model::dissipative(1.0, 0.3).unwrap(), k, Unraveling::Linear(table.clone()), psi0, 0.01, 100, 20).unwrap();
        let report = novikov_check(&coupled, table.as_ref(), 200, 2).unwrap();
        assert_eq!(report.points[0].rhs.max_abs(), 0.0);
        assert!(report.max_abs_z() < 4.5);
    }
}
