//! Studies behind the presets: each returns its raw numbers, and
//! [`run`] turns them into CSV files and pass/fail gates.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};

use qsd_core::ensemble::{compare, novikov_check, ComparisonReport, EnsembleAccumulator, NovikovReport};
use qsd_core::kernels::{qbm_coeff_table, CoeffTable, Kernel, QbmCoefficients, QbmTable};
use qsd_core::linalg::{pauli_basis, ComplexMatrix, ComplexVector};
use qsd_core::master::{diagnostics, harmonic_oscillator, propagate, DensityMatrix, MasterScheme, MasterSeries};
use qsd_core::model::Model;
use qsd_core::noise::{complex_gaussian, trajectory_rng};
use qsd_core::obar::ObarScheme;
use qsd_core::oracle::{evolve_total, fit_bath, DiscretizedBath};
use qsd_core::qsd::{default_dt, TrajectoryConfig, Unraveling};

use crate::config::{ExperimentConfig, ExperimentKind, ModelChoice, ReferenceChoice, SchemeChoice};
use crate::csv::Table;
use crate::parallel::{pool, run_ensemble_parallel};

pub const OBSERVABLE_NAMES: [&str; 3] = ["sx", "sy", "sz"];

pub fn sigma_observables() -> Vec<ComplexMatrix> {
    let s = pauli_basis();
    vec![s.x, s.y, s.z]
}

pub fn two_level_model(cfg: &ExperimentConfig) -> anyhow::Result<Model> {
    Ok(match cfg.model {
        ModelChoice::Dissipative => Model::dissipative(cfg.omega, cfg.lambda)?,
        ModelChoice::Driven => Model::driven(cfg.omega, cfg.lambda)?,
        ModelChoice::Oscillator => bail!("this experiment needs a two-level model"),
    })
}

fn coeff_table(kernel: &Kernel, dt: f64, n_steps: usize, second: bool) -> anyhow::Result<Arc<CoeffTable>> {
    Ok(Arc::new(CoeffTable::for_steps(kernel, dt, n_steps, second)?))
}

/// Trajectory setup for the configured scheme.
pub fn trajectory_config(cfg: &ExperimentConfig, model: &Model, kernel: &Kernel) -> anyhow::Result<TrajectoryConfig> {
    let n = cfg.n_steps();
    let table = || coeff_table(kernel, cfg.dt, n, false);
    let unraveling = match cfg.scheme {
        SchemeChoice::FirstOrder => Unraveling::Nonlinear(ObarScheme::FirstOrder(table()?)),
        SchemeChoice::FirstOrderExplicit => Unraveling::FirstOrderExplicit(table()?),
        SchemeChoice::SecondOrder => Unraveling::Nonlinear(ObarScheme::SecondOrder(coeff_table(kernel, cfg.dt, n, true)?)),
        SchemeChoice::FunctionalZeroth => Unraveling::Nonlinear(ObarScheme::functional_zeroth(model, kernel)?),
        SchemeChoice::Exact => Unraveling::Nonlinear(ObarScheme::exact_dissipative(model, kernel)?),
        SchemeChoice::Linear => Unraveling::Linear(table()?),
        SchemeChoice::Markov => Unraveling::Markov,
    };
    Ok(TrajectoryConfig::new(model.clone(), kernel.clone(), unraveling, cfg.psi0()?, cfg.dt, n, cfg.stride)?)
}

/// Master-equation series on the trajectory output grid.
pub fn reference_series(cfg: &ExperimentConfig, reference: ReferenceChoice, model: &Model, kernel: &Kernel) -> anyhow::Result<MasterSeries> {
    let n = cfg.n_steps();
    let scheme = match reference {
        ReferenceChoice::Lindblad => MasterScheme::Lindblad,
        ReferenceChoice::FirstOrder => MasterScheme::FirstOrder(coeff_table(kernel, cfg.dt, n, false)?),
        ReferenceChoice::LongTime => MasterScheme::long_time(kernel)?,
        ReferenceChoice::FunctionalZeroth => MasterScheme::functional_zeroth(kernel)?,
        ReferenceChoice::Exact => MasterScheme::exact_dissipative(model, kernel)?,
    };
    let rho0 = DensityMatrix::from_pure(&cfg.psi0()?)?;
    Ok(propagate(model, &scheme, &rho0, cfg.dt, n, cfg.stride)?)
}

pub struct Comparison {
    pub reference: ReferenceChoice,
    pub series: MasterSeries,
    pub report: ComparisonReport,
}

pub struct EnsembleStudy {
    pub acc: EnsembleAccumulator,
    pub comparisons: Vec<Comparison>,
}

impl EnsembleStudy {
    pub fn against(&self, reference: ReferenceChoice) -> Option<&ComparisonReport> {
        self.comparisons.iter().find(|c| c.reference == reference).map(|c| &c.report)
    }
}

/// Trajectory ensemble plus every configured reference.
pub fn ensemble_study(cfg: &ExperimentConfig, threads: usize) -> anyhow::Result<EnsembleStudy> {
    let model = two_level_model(cfg)?;
    let kernel = cfg.kernel()?;
    let traj = trajectory_config(cfg, &model, &kernel)?;
    let acc = run_ensemble_parallel(&pool(threads)?, &traj, &sigma_observables(), cfg.n_traj, cfg.seed)?;
    let mut comparisons = Vec::new();
    for &reference in &cfg.references {
        let series = reference_series(cfg, reference, &model, &kernel).with_context(|| format!("reference `{reference}`"))?;
        let report = compare(&acc, &series)?;
        comparisons.push(Comparison { reference, series, report });
    }
    Ok(EnsembleStudy { acc, comparisons })
}

pub struct PositivityStudy {
    pub times: Vec<f64>,
    /// `‖⟨σ⃗⟩‖` under the long-time (frozen-coefficient) equation.
    pub long_time: Vec<f64>,
    /// `‖⟨σ⃗⟩‖` under the time-dependent first-order equation.
    pub time_dependent: Vec<f64>,
    pub time_dependent_min_eigenvalue: f64,
}

fn bloch_norms(series: &MasterSeries) -> Vec<f64> {
    series.states.iter().map(|r| r.diagnostics().bloch_norm.expect("two-level state")).collect()
}

pub fn positivity_study(cfg: &ExperimentConfig) -> anyhow::Result<PositivityStudy> {
    let model = two_level_model(cfg)?;
    let kernel = cfg.kernel()?;
    let long = reference_series(cfg, ReferenceChoice::LongTime, &model, &kernel)?;
    let td = reference_series(cfg, ReferenceChoice::FirstOrder, &model, &kernel)?;
    let min_eig = td.states.iter().map(|r| r.diagnostics().min_eigenvalue).fold(f64::INFINITY, f64::min);
    Ok(PositivityStudy { times: td.times.clone(), long_time: bloch_norms(&long), time_dependent: bloch_norms(&td), time_dependent_min_eigenvalue: min_eig })
}

pub struct MarkovLimitStudy {
    pub master_times: Vec<f64>,
    /// Trace distance between the colored-noise first-order master equation and Lindblad.
    pub trace_distance: Vec<f64>,
    pub markov: EnsembleStudy,
}

pub fn markov_limit_study(cfg: &ExperimentConfig, threads: usize) -> anyhow::Result<MarkovLimitStudy> {
    let model = two_level_model(cfg)?;
    let kernel = cfg.kernel()?;
    let first = reference_series(cfg, ReferenceChoice::FirstOrder, &model, &kernel)?;
    let lindblad = reference_series(cfg, ReferenceChoice::Lindblad, &model, &kernel)?;
    let trace_distance = first
        .states
        .iter()
        .zip(&lindblad.states)
        .map(|(a, b)| qsd_core::linalg::trace_distance(a.matrix(), b.matrix()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut white = cfg.clone();
    white.kernel = crate::config::KernelChoice::Delta;
    white.scheme = SchemeChoice::Markov;
    white.dt = default_dt(None, Some(cfg.omega), Some(cfg.lambda));
    white.stride = ((cfg.dt * cfg.stride as f64) / white.dt).round().max(1.0) as usize;
    white.references = vec![ReferenceChoice::Lindblad];
    let markov = ensemble_study(&white, threads)?;
    Ok(MarkovLimitStudy { master_times: first.times, trace_distance, markov })
}

pub struct OracleStudy {
    pub times: Vec<f64>,
    /// Excited population from the exact master equation.
    pub exact: Vec<f64>,
    /// Same from the joint evolution with the Gauss-fitted bath.
    pub fitted: Vec<f64>,
    pub fitted_residual: f64,
    /// Population error the fitted bath's kernel misfit can account for.
    pub fitted_allowance: f64,
    /// Same from a fine uniform bath that resolves the kernel over the window.
    pub converged: Vec<f64>,
    pub converged_residual: f64,
    pub converged_modes: usize,
    pub max_norm_drift: f64,
}

impl OracleStudy {
    fn max_gap(&self, other: &[f64]) -> f64 {
        self.exact.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn fitted_gap(&self) -> f64 {
        self.max_gap(&self.fitted)
    }

    pub fn converged_gap(&self) -> f64 {
        self.max_gap(&self.converged)
    }
}

fn excited_population(series: &MasterSeries) -> Vec<f64> {
    series.states.iter().map(|r| r.matrix()[(0, 0)].re).collect()
}

pub fn oracle_study(cfg: &ExperimentConfig) -> anyhow::Result<OracleStudy> {
    let model = two_level_model(cfg)?;
    let kernel = cfg.kernel()?;
    let gamma = cfg.gamma.context("the oracle check needs an ou kernel")?;
    let psi0 = cfg.psi0()?;
    let n = cfg.n_steps();
    let exact = reference_series(cfg, ReferenceChoice::Exact, &model, &kernel)?;
    let fit = fit_bath(&kernel, cfg.n_modes, cfg.t_max)?;
    let fitted = evolve_total(&model, &fit.bath, &psi0, cfg.dt, n, cfg.stride)?;
    let fine = DiscretizedBath::uniform(&kernel, 2.0 * PI / (2.0 * cfg.t_max), 10.0 * gamma)?;
    let converged = evolve_total(&model, &fine, &psi0, cfg.dt, n, cfg.stride)?;
    Ok(OracleStudy {
        times: exact.times.clone(),
        exact: excited_population(&exact),
        fitted: excited_population(&fitted.series),
        fitted_residual: fit.residual,
        fitted_allowance: fit.bath.population_error_bound(&kernel, cfg.lambda, cfg.t_max)?,
        converged: excited_population(&converged.series),
        converged_residual: fine.residual(&kernel, cfg.t_max)?,
        converged_modes: fine.len(),
        max_norm_drift: fitted.max_norm_drift.max(converged.max_norm_drift),
    })
}

/// Forward-difference slope at zero with a Richardson error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slope {
    pub value: f64,
    pub error: f64,
}

fn slope_at_zero(at_h: f64, at_half: f64, at_zero: f64, h: f64) -> Slope {
    let coarse = (at_h - at_zero) / h;
    let fine = (at_half - at_zero) / (0.5 * h);
    Slope { value: 2.0 * fine - coarse, error: (fine - coarse).abs() }
}

pub struct QbmStudy {
    pub table: Vec<QbmCoefficients>,
    pub initial: QbmCoefficients,
    pub g0r_slope: Slope,
    pub g1i_slope: Slope,
    /// Coefficients at `t = 10/Λ`.
    pub late: QbmCoefficients,
    /// Means of `g0R` and `g1I` over `[5/Λ, 10/Λ]`.
    pub g0r_late_average: f64,
    pub g1i_late_average: f64,
    pub min_eigenvalues: Vec<f64>,
    pub untrusted: bool,
    pub series_times: Vec<f64>,
    /// Smallest eigenvalue per output time, minimized over the initial states.
    pub min_eigenvalue_series: Vec<f64>,
}

/// Random pure oscillator state supported on the lowest `support` levels.
pub fn random_oscillator_state(n_levels: usize, support: usize, seed: u64, index: u64) -> anyhow::Result<ComplexVector> {
    let mut rng = trajectory_rng(seed, index);
    let amps = (0..n_levels).map(|k| if k < support { complex_gaussian(&mut rng, 1.0) } else { Default::default() }).collect();
    Ok(ComplexVector::normalized_from(amps)?)
}

pub fn qbm_study(cfg: &ExperimentConfig) -> anyhow::Result<QbmStudy> {
    let kernel = cfg.kernel()?;
    let lc = cfg.cutoff;
    let late_t = 10.0 / lc;
    let grid: Vec<f64> = (0..=200).map(|k| k as f64 * late_t / 200.0).collect();
    let table = qbm_coeff_table(&kernel, &grid)?;
    let h = 1e-2 / lc;
    let probe = qbm_coeff_table(&kernel, &[0.0, 0.5 * h, h])?;
    let initial = probe[0];
    let g0r_slope = slope_at_zero(probe[2].g0r, probe[1].g0r, probe[0].g0r, h);
    let g1i_slope = slope_at_zero(probe[2].g1i, probe[1].g1i, probe[0].g1i, h);
    let late = *table.last().expect("non-empty grid");
    let tail: Vec<&QbmCoefficients> = table.iter().filter(|r| r.t >= 0.5 * late_t - 1e-12).collect();
    let g0r_late_average = tail.iter().map(|r| r.g0r).sum::<f64>() / tail.len() as f64;
    let g1i_late_average = tail.iter().map(|r| r.g1i).sum::<f64>() / tail.len() as f64;

    let shift = if cfg.counterterm { cfg.eta * cfg.cutoff / PI } else { 0.0 };
    let (model, _) = harmonic_oscillator(cfg.n_levels, cfg.omega0, shift)?;
    let n = cfg.n_steps();
    let coeffs = Arc::new(QbmTable::new(&kernel, 0.5 * cfg.dt, 2 * n + 1)?);
    let scheme = MasterScheme::QbmZeroth(coeffs);
    let mut min_eigenvalues = Vec::new();
    let mut min_eigenvalue_series: Vec<f64> = Vec::new();
    let mut series_times = Vec::new();
    let mut untrusted = false;
    for k in 0..cfg.n_traj {
        let psi = random_oscillator_state(cfg.n_levels, 6, cfg.seed, k)?;
        let series = propagate(&model, &scheme, &DensityMatrix::from_pure(&psi)?, cfg.dt, n, cfg.stride)?;
        untrusted |= series.untrusted;
        let mins: Vec<f64> = series.states.iter().map(|r| diagnostics(r.matrix()).min_eigenvalue).collect();
        min_eigenvalues.push(mins.iter().copied().fold(f64::INFINITY, f64::min));
        if min_eigenvalue_series.is_empty() {
            min_eigenvalue_series = mins;
            series_times = series.times.clone();
        } else {
            for (a, b) in min_eigenvalue_series.iter_mut().zip(mins) {
                *a = a.min(b);
            }
        }
    }
    Ok(QbmStudy { table, initial, g0r_slope, g1i_slope, late, g0r_late_average, g1i_late_average, min_eigenvalues, untrusted, series_times, min_eigenvalue_series })
}

pub fn novikov_study(cfg: &ExperimentConfig) -> anyhow::Result<NovikovReport> {
    let model = two_level_model(cfg)?;
    let kernel = cfg.kernel()?;
    let mut linear = cfg.clone();
    linear.scheme = SchemeChoice::Linear;
    let traj = trajectory_config(&linear, &model, &kernel)?;
    let table = CoeffTable::for_steps(&kernel, cfg.dt, cfg.n_steps(), false)?;
    Ok(novikov_check(&traj, &table, cfg.n_traj, cfg.seed)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Below,
    AtMost,
    Above,
}

/// One numeric pass/fail verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub threshold: f64,
    /// Advisory gates are reported but never fail a run.
    pub advisory: bool,
}

impl Gate {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound, threshold: f64) -> Self {
        Self { name: name.into(), value, bound, threshold, advisory: false }
    }

    pub fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::Below => self.value < self.threshold,
            Bound::AtMost => self.value <= self.threshold,
            Bound::Above => self.value > self.threshold,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::Below => "<",
            Bound::AtMost => "<=",
            Bound::Above => ">",
        };
        let verdict = match (self.passed(), self.advisory) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "WARN",
        };
        write!(f, "{verdict} {}: {:.4e} {op} {:.4e}", self.name, self.value, self.threshold)?;
        if self.advisory {
            f.write_str(" (advisory)")?;
        }
        Ok(())
    }
}

/// Everything a run produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub name: String,
    pub summary: Vec<String>,
    pub gates: Vec<Gate>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.advisory || g.passed())
    }
}

struct Writer<'a> {
    dir: Option<&'a Path>,
    prefix: &'a str,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, suffix: &str, table: &Table) -> anyhow::Result<()> {
        if let Some(dir) = self.dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("{}_{suffix}.csv", self.prefix));
            table.write(&path).with_context(|| format!("writing {}", path.display()))?;
            self.files.push(path);
        }
        Ok(())
    }
}

/// `t, mean_<obs>, se_<obs>, …, rho_re_ij, rho_im_ij, …`
pub fn ensemble_table(acc: &EnsembleAccumulator) -> Table {
    let dim = acc.dim();
    let mut header = vec!["t".to_string()];
    for name in OBSERVABLE_NAMES.iter().take(acc.observables().len()) {
        header.push(format!("mean_{name}"));
        header.push(format!("se_{name}"));
    }
    for i in 0..dim {
        for j in 0..dim {
            header.push(format!("rho_re_{i}{j}"));
            header.push(format!("rho_im_{i}{j}"));
        }
    }
    let mut table = Table::new(header);
    for (k, &t) in acc.times().iter().enumerate() {
        let mut row = vec![t];
        for j in 0..acc.observables().len() {
            row.push(acc.mean(k, j));
            row.push(acc.standard_error(k, j));
        }
        for z in acc.rho_hat(k).as_slice() {
            row.push(z.re);
            row.push(z.im);
        }
        table.push(row);
    }
    table
}

/// Ensemble means next to every reference.
pub fn overlay_table(study: &EnsembleStudy) -> Table {
    let n_obs = study.acc.observables().len();
    let mut header = vec!["t".to_string()];
    for name in &OBSERVABLE_NAMES[..n_obs] {
        header.push(format!("qsd_{name}"));
        header.push(format!("se_{name}"));
        for c in &study.comparisons {
            header.push(format!("{}_{name}", c.reference.label().replace('-', "_")));
        }
    }
    for c in &study.comparisons {
        header.push(format!("trace_distance_{}", c.reference.label().replace('-', "_")));
    }
    let mut table = Table::new(header);
    for (k, &t) in study.acc.times().iter().enumerate() {
        let mut row = vec![t];
        for j in 0..n_obs {
            row.push(study.acc.mean(k, j));
            row.push(study.acc.standard_error(k, j));
            for c in &study.comparisons {
                row.push(c.report.reference[k][j]);
            }
        }
        for c in &study.comparisons {
            row.push(c.report.trace_distance[k]);
        }
        table.push(row);
    }
    table
}

/// Output directory precedence: explicit flag, then `QSD_OUT_DIR`, then `qsd-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("QSD_OUT_DIR").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("qsd-out"))
}

/// Runs a configuration, writing CSVs into `out_dir` when given.
pub fn run(cfg: &ExperimentConfig, threads: usize, out_dir: Option<&Path>) -> anyhow::Result<Outcome> {
    cfg.check()?;
    let mut w = Writer { dir: out_dir, prefix: &cfg.name, files: Vec::new() };
    let mut out = Outcome { name: cfg.name.clone(), ..Outcome::default() };
    match cfg.kind {
        ExperimentKind::Ensemble => {
            let study = ensemble_study(cfg, threads)?;
            w.write("ensemble", &ensemble_table(&study.acc))?;
            w.write("overlay", &overlay_table(&study))?;
            let (lo, hi) = cfg.gates.window;
            for c in &study.comparisons {
                let s = c.report.window_for(lo, hi, cfg.gates.observable);
                out.summary.push(format!(
                    "vs {}: max |z| = {:.3}, max |dev| = {:.4}, max trace distance = {:.4}",
                    c.reference, s.max_abs_z, s.max_abs_deviation, s.max_trace_distance
                ));
            }
            if let Some(r) = cfg.gates.agree_with {
                let s = study.against(r).with_context(|| format!("`agree_with = {r}` is not among the references"))?.window_for(lo, hi, cfg.gates.observable);
                out.gates.push(Gate::new(format!("max |z| vs {r}"), s.max_abs_z, Bound::Below, cfg.gates.max_z));
                if let Some(d) = cfg.gates.max_deviation {
                    out.gates.push(Gate::new(format!("max |dev| vs {r}"), s.max_abs_deviation, Bound::Below, d));
                }
            }
            if let Some(r) = cfg.gates.differ_from {
                let s = study.against(r).with_context(|| format!("`differ_from = {r}` is not among the references"))?.window_for(lo, hi, cfg.gates.observable);
                out.gates.push(Gate::new(format!("max |z| vs {r} (separation)"), s.max_abs_z, Bound::Above, cfg.gates.min_separation));
            }
        }
        ExperimentKind::Positivity => {
            let s = positivity_study(cfg)?;
            let mut t = Table::new(["t", "bloch_long_time", "bloch_time_dependent"]);
            for k in 0..s.times.len() {
                t.push(vec![s.times[k], s.long_time[k], s.time_dependent[k]]);
            }
            w.write("bloch", &t)?;
            let early = s.times.iter().zip(&s.long_time).filter(|(t, _)| **t < 2.0).map(|(_, b)| *b).fold(0.0, f64::max);
            let td = s.time_dependent.iter().copied().fold(0.0, f64::max);
            out.summary.push(format!("long-time max |r| (t < 2) = {early:.6}; time-dependent max |r| = {td:.9}"));
            out.gates.push(Gate::new("long-time equation leaves the Bloch ball", early, Bound::Above, 1.0 + 1e-3));
            out.gates.push(Gate::new("time-dependent equation stays in the Bloch ball", td, Bound::AtMost, 1.0 + 1e-6));
        }
        ExperimentKind::MarkovLimit => {
            let s = markov_limit_study(cfg, threads)?;
            let (lo, hi) = cfg.gates.window;
            let td = s.master_times.iter().zip(&s.trace_distance).filter(|(t, _)| **t >= lo - 1e-12 && **t <= hi + 1e-12).map(|(_, d)| *d).fold(0.0, f64::max);
            let mut t = Table::new(["t", "trace_distance_first_order_lindblad"]);
            for (a, b) in s.master_times.iter().zip(&s.trace_distance) {
                t.push(vec![*a, *b]);
            }
            w.write("master", &t)?;
            w.write("markov_overlay", &overlay_table(&s.markov))?;
            let z = s.markov.against(ReferenceChoice::Lindblad).expect("lindblad reference").summary();
            out.summary.push(format!("first-order vs lindblad: max trace distance on [{lo}, {hi}] = {td:.5}"));
            out.summary.push(format!("markov trajectories vs lindblad: max |z| = {:.3}", z.max_abs_z));
            out.gates.push(Gate::new("first-order master vs lindblad trace distance", td, Bound::Below, 0.02));
            out.gates.push(Gate::new("markov trajectories vs lindblad max |z|", z.max_abs_z, Bound::Below, cfg.gates.max_z));
        }
        ExperimentKind::Oracle => {
            let s = oracle_study(cfg)?;
            let mut t = Table::new(["t", "exact", "fitted_bath", "converged_bath"]);
            for k in 0..s.times.len() {
                t.push(vec![s.times[k], s.exact[k], s.fitted[k], s.converged[k]]);
            }
            w.write("population", &t)?;
            out.summary.push(format!(
                "{}-mode fit: residual {:.3}, max |dP| = {:.3e}, misfit allowance {:.3e}",
                cfg.n_modes,
                s.fitted_residual,
                s.fitted_gap(),
                s.fitted_allowance
            ));
            out.summary.push(format!("{}-mode uniform bath: residual {:.3e}, max |dP| = {:.3e}", s.converged_modes, s.converged_residual, s.converged_gap()));
            out.gates.push(Gate::new(format!("{}-mode bath |dP| within 1e-3 + misfit allowance", cfg.n_modes), s.fitted_gap(), Bound::Below, 1e-3 + s.fitted_allowance));
            out.gates.push(Gate::new("converged bath |dP|", s.converged_gap(), Bound::Below, 1e-3));
            out.gates.push(Gate::new("joint norm drift", s.max_norm_drift, Bound::Below, 1e-9));
        }
        ExperimentKind::Qbm => {
            let s = qbm_study(cfg)?;
            w.write("coefficients", &coefficient_table(&s.table))?;
            let mut t = Table::new(["t", "min_eigenvalue"]);
            for (a, b) in s.series_times.iter().zip(&s.min_eigenvalue_series) {
                t.push(vec![*a, *b]);
            }
            w.write("positivity", &t)?;
            let ekt = cfg.eta * cfg.kt;
            let half = 0.5 * cfg.eta;
            let i = s.initial;
            out.gates.push(Gate::new("coefficients vanish at t = 0", i.g0r.abs().max(i.g0i.abs()).max(i.g1r.abs()).max(i.g1i.abs()), Bound::AtMost, 0.0));
            out.gates.push(Gate::new("|dg1I/dt(0)| within grid error", s.g1i_slope.value.abs(), Bound::AtMost, s.g1i_slope.error));
            out.gates.push(Gate::new("dg0R/dt(0) beyond grid error", s.g0r_slope.value, Bound::Above, s.g0r_slope.error));
            out.gates.push(Gate::new("|g0R - eta kT| / eta kT at t = 10/cutoff", (s.late.g0r - ekt).abs() / ekt, Bound::Below, 0.05));
            out.gates.push(Gate::new("||g1I| - eta/2| / (eta/2) at t = 10/cutoff", (s.late.g1i.abs() - half).abs() / half, Bound::Below, 0.05));
            out.gates.push(Gate::new("late average of g0R vs eta kT", (s.g0r_late_average - ekt).abs() / ekt, Bound::Below, 0.05).advisory());
            out.gates.push(Gate::new("late average of |g1I| vs eta/2", (s.g1i_late_average.abs() - half).abs() / half, Bound::Below, 0.05).advisory());
            let min = s.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            out.gates.push(Gate::new(format!("zeroth-order propagator min eigenvalue over {} states", s.min_eigenvalues.len()), min, Bound::Above, -1e-8 - f64::EPSILON));
            out.gates.push(Gate::new("truncation edge population stayed below 1e-3", if s.untrusted { 1.0 } else { 0.0 }, Bound::Below, 0.5).advisory());
        }
        ExperimentKind::Novikov => {
            let r = novikov_study(cfg)?;
            let mut t = Table::new(["t", "lhs_re_01", "lhs_im_01", "rhs_re_01", "rhs_im_01", "max_abs_z"]);
            for p in &r.points {
                let (l, rr) = (p.lhs[(0, 1)], p.rhs[(0, 1)]);
                t.push(vec![p.t, l.re, l.im, rr.re, rr.im, p.max_abs_z]);
            }
            w.write("novikov", &t)?;
            out.gates.push(Gate::new("Novikov relation max |z|", r.max_abs_z(), Bound::Below, 4.0).advisory());
        }
    }
    out.files = w.files;
    Ok(out)
}

/// `t, g0R, g0I, g1R, g1I`
pub fn coefficient_table(rows: &[QbmCoefficients]) -> Table {
    let mut t = Table::new(["t", "g0R", "g0I", "g1R", "g1I"]);
    for r in rows {
        t.push(vec![r.t, r.g0r, r.g0i, r.g1r, r.g1i]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn gate_display_and_verdicts() {
        let g = Gate::new("x", 0.5, Bound::Below, 1.0);
        assert!(g.passed());
        assert!(g.to_string().starts_with("PASS x"));
        let g = Gate::new("y", 2.0, Bound::Below, 1.0).advisory();
        assert!(!g.passed());
        assert!(g.to_string().starts_with("WARN"));
        assert!(Gate::new("z", 0.0, Bound::AtMost, 0.0).passed());
        let o = Outcome { gates: vec![g], ..Outcome::default() };
        assert!(o.passed());
    }

    #[test]
    fn slope_extrapolation() {
        let f = |t: f64| 3.0 * t + 2.0 * t * t;
        let s = slope_at_zero(f(0.1), f(0.05), 0.0, 0.1);
        assert!((s.value - 3.0).abs() < 1e-12);
        let cubic = |t: f64| t * t * t;
        let s = slope_at_zero(cubic(0.1), cubic(0.05), 0.0, 0.1);
        assert!(s.value.abs() <= s.error);
    }

    #[test]
    fn small_ensemble_run_writes_files() {
        let mut cfg = preset("fig4").unwrap();
        cfg.n_traj = 8;
        cfg.t_max = 0.2;
        let dir = tempfile::tempdir().unwrap();
        let out = run(&cfg, 1, Some(dir.path())).unwrap();
        assert_eq!(out.files.len(), 2);
        let text = std::fs::read_to_string(&out.files[0]).unwrap();
        assert!(text.starts_with("t,mean_sx,se_sx,mean_sy,se_sy,mean_sz,se_sz,rho_re_00"));
        assert_eq!(text.lines().count(), 4);
    }
}
