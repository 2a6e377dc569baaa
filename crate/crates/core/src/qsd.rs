//! Stochastic trajectory integrators.
//!
//! All steppers are Heun predictor-corrector schemes for a random ODE. The
//! noise enters through a [`StageNoise`] holding its values at the start and
//! end of the step; passing the same value twice holds it constant.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;

use crate::error::{invalid, Error, Result};
use crate::kernels::{CoefficientSource, FirstOrderCoeffs, Kernel};
use crate::linalg::{expectation_normalized, ComplexMatrix, ComplexVector, C64, I};
use crate::model::Model;
use crate::noise::{complex_gaussian, sample_ou_path_with, trajectory_rng, GaussianPathSampler, ShiftAccumulator};
use crate::obar::ObarScheme;

/// Noise values at both ends of one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageNoise {
    pub start: C64,
    pub end: C64,
}

impl StageNoise {
    pub fn constant(z: C64) -> Self {
        Self { start: z, end: z }
    }
}

/// Normalized state of one nonlinear trajectory with its bookkeeping.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    pub psi: ComplexVector,
    pub t: f64,
    pub step: usize,
    /// Shift memory; `None` means the shift is identically zero.
    pub shift: Option<ShiftAccumulator>,
    /// `Ō` rule; only the generic nonlinear stepper reads it.
    pub scheme: Option<ObarScheme>,
}

impl TrajectoryState {
    pub fn new(psi: ComplexVector, shift: Option<ShiftAccumulator>, scheme: Option<ObarScheme>) -> Result<Self> {
        if (psi.norm() - 1.0).abs() > 1e-8 {
            return Err(invalid("psi0", "must be normalized"));
        }
        Ok(Self { psi, t: 0.0, step: 0, shift, scheme })
    }
}

fn add_expectation_counterterm(out: &mut ComplexVector, op_psi: &ComplexVector, psi: &ComplexVector, factor: C64) {
    // out += factor · (op ψ − ⟨op⟩ ψ)
    let mean = psi.inner(op_psi) / psi.norm_sqr();
    out.add_scaled(factor, op_psi);
    out.add_scaled(-factor * mean, psi);
}

/// Drift of the norm-preserving equation,
/// `−iHψ + Δ(L)z̃ψ − Δ(L†)Ōψ + ⟨Δ(L†)Ō⟩ψ`.
fn nonlinear_drift(model: &Model, psi: &ComplexVector, obar: &ComplexMatrix, z_shifted: C64) -> Result<ComplexVector> {
    let mut out = model.h().apply(psi)?.scale(-I);
    add_expectation_counterterm(&mut out, &model.l().apply(psi)?, psi, z_shifted);
    let ldag_mean = expectation_normalized(model.l_dag(), psi)?;
    let o_psi = obar.apply(psi)?;
    let mut delta_ldag_o = model.l_dag().apply(&o_psi)?;
    delta_ldag_o.add_scaled(-ldag_mean, &o_psi);
    let mean = psi.inner(&delta_ldag_o) / psi.norm_sqr();
    out.add_scaled(C64::new(-1.0, 0.0), &delta_ldag_o);
    out.add_scaled(mean, psi);
    Ok(out)
}

/// The same drift with `Ō` expanded to first order term by term:
/// `−g0(Δ(L†)L − ⟨·⟩) + ig1(Δ(L†)[H,L] − ⟨·⟩) + g2(Δ(L†)[L†,L]L − ⟨·⟩)`.
fn explicit_first_order_drift(model: &Model, psi: &ComplexVector, g: &FirstOrderCoeffs, z_shifted: C64) -> Result<ComplexVector> {
    let mut out = model.h().apply(psi)?.scale(-I);
    add_expectation_counterterm(&mut out, &model.l().apply(psi)?, psi, z_shifted);
    let ldag_mean = expectation_normalized(model.l_dag(), psi)?;
    let mut term = |op: &ComplexMatrix, factor: C64| -> Result<()> {
        let op_psi = op.apply(psi)?;
        let mut d = model.l_dag().apply(&op_psi)?;
        d.add_scaled(-ldag_mean, &op_psi);
        let mean = psi.inner(&d) / psi.norm_sqr();
        out.add_scaled(factor, &d);
        out.add_scaled(-factor * mean, psi);
        Ok(())
    };
    term(model.l(), -g.g0)?;
    term(model.h_l(), I * g.g1)?;
    term(model.lindblad_cubic(), g.g2)?;
    Ok(out)
}

/// Drift of the linear first-order equation,
/// `−iH + Lz − g0L†L + ig1L†[H,L] + g2L†[L†,L]L`.
fn linear_drift(model: &Model, psi: &ComplexVector, g: &FirstOrderCoeffs, z: C64) -> Result<ComplexVector> {
    let mut out = model.h().apply(psi)?.scale(-I);
    out.add_scaled(z, &model.l().apply(psi)?);
    let mut inner = model.l().apply(psi)?.scale(-g.g0);
    inner.add_scaled(I * g.g1, &model.h_l().apply(psi)?);
    inner.add_scaled(g.g2, &model.lindblad_cubic().apply(psi)?);
    out.add_scaled(C64::new(1.0, 0.0), &model.l_dag().apply(&inner)?);
    Ok(out)
}

/// Stratonovich drift of Markov QSD, `−iH + Δ(L)(ξ + ⟨L†⟩) − ½Δ(L†L)`.
fn markov_drift(model: &Model, psi: &ComplexVector, xi: C64) -> Result<ComplexVector> {
    let ldag_mean = expectation_normalized(model.l_dag(), psi)?;
    let mut out = model.h().apply(psi)?.scale(-I);
    add_expectation_counterterm(&mut out, &model.l().apply(psi)?, psi, xi + ldag_mean);
    add_expectation_counterterm(&mut out, &model.l_dag_l().apply(psi)?, psi, C64::new(-0.5, 0.0));
    Ok(out)
}

fn check_finite(v: &ComplexVector, step: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// Heun step of a norm-preserving equation whose drift depends on the
/// shifted noise; `drift(stage, ψ, z̃)` with stage 0 at `t` and 1 at `t + dt`.
/// Returns the norm before renormalization.
fn heun_shifted<F>(state: &mut TrajectoryState, model: &Model, noise: StageNoise, dt: f64, mut drift: F) -> Result<f64>
where
    F: FnMut(usize, &ComplexVector, C64) -> Result<ComplexVector>,
{
    let psi0 = &state.psi;
    let l0 = expectation_normalized(model.l_dag(), psi0)?;
    let memory0 = state.shift.as_ref().map_or(C64::new(0.0, 0.0), |s| s.memory());
    let k1 = drift(0, psi0, noise.start + memory0)?;
    let mut predicted = psi0.clone();
    predicted.add_scaled(C64::new(dt, 0.0), &k1);
    check_finite(&predicted, state.step)?;
    let l_pred = expectation_normalized(model.l_dag(), &predicted)?;
    let memory1 = match &state.shift {
        Some(s) => s.peek_trapezoid(l0, l_pred)?,
        None => C64::new(0.0, 0.0),
    };
    let k2 = drift(1, &predicted, noise.end + memory1)?;
    let mut next = psi0.clone();
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k1);
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k2);
    check_finite(&next, state.step)?;
    let norm = next.norm();
    next.normalize();
    if let Some(shift) = state.shift.as_mut() {
        let l1 = expectation_normalized(model.l_dag(), &next)?;
        shift.advance_trapezoid(l0, l1)?;
    }
    state.psi = next;
    state.t += dt;
    state.step += 1;
    Ok(norm)
}

/// One step of the nonlinear equation with `Ō` taken from `state.scheme`.
pub fn step_nonlinear_qsd(state: &mut TrajectoryState, model: &Model, noise: StageNoise, dt: f64) -> Result<f64> {
    let scheme = state
        .scheme
        .clone()
        .ok_or(Error::Unsupported { what: "step_nonlinear_qsd", requirement: "a trajectory state carrying an Ō scheme" })?;
    let t = state.t;
    let obar_start = scheme.value(model, t)?;
    let mut advanced = scheme.clone();
    advanced.advance(model, dt)?;
    let obar_end = advanced.value(model, t + dt)?;
    let result = heun_shifted(state, model, noise, dt, |stage, psi, z| {
        nonlinear_drift(model, psi, if stage == 0 { &obar_start } else { &obar_end }, z)
    });
    if result.is_ok() {
        state.scheme = Some(advanced);
    }
    result
}

/// One step of the first-order nonlinear equation in its expanded form.
pub fn step_first_order_qsd(
    state: &mut TrajectoryState,
    model: &Model,
    coeffs: &dyn CoefficientSource,
    noise: StageNoise,
    dt: f64,
) -> Result<f64> {
    let g_start = coeffs.first_order(state.t)?;
    let g_end = coeffs.first_order(state.t + dt)?;
    heun_shifted(state, model, noise, dt, |stage, psi, z| {
        explicit_first_order_drift(model, psi, if stage == 0 { &g_start } else { &g_end }, z)
    })
}

/// One step of the linear first-order equation. The state is not normalized.
pub fn step_linear_qsd(
    psi: &ComplexVector,
    t: f64,
    model: &Model,
    coeffs: &dyn CoefficientSource,
    noise: StageNoise,
    dt: f64,
) -> Result<ComplexVector> {
    let g_start = coeffs.first_order(t)?;
    let g_end = coeffs.first_order(t + dt)?;
    let k1 = linear_drift(model, psi, &g_start, noise.start)?;
    let mut predicted = psi.clone();
    predicted.add_scaled(C64::new(dt, 0.0), &k1);
    let k2 = linear_drift(model, &predicted, &g_end, noise.end)?;
    let mut next = psi.clone();
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k1);
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k2);
    Ok(next)
}

/// One Stratonovich Heun step of Markov QSD driven by the complex Wiener
/// increment `dw` (`M[|dw|²] = dt`).
pub fn step_markov_qsd(state: &mut TrajectoryState, model: &Model, dw: C64, dt: f64) -> Result<f64> {
    let xi = dw / dt;
    let k1 = markov_drift(model, &state.psi, xi)?;
    let mut predicted = state.psi.clone();
    predicted.add_scaled(C64::new(dt, 0.0), &k1);
    check_finite(&predicted, state.step)?;
    let k2 = markov_drift(model, &predicted, xi)?;
    let mut next = state.psi.clone();
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k1);
    next.add_scaled(C64::new(0.5 * dt, 0.0), &k2);
    check_finite(&next, state.step)?;
    let norm = next.norm();
    next.normalize();
    state.psi = next;
    state.t += dt;
    state.step += 1;
    Ok(norm)
}

/// Which trajectory equation to integrate.
#[derive(Clone, Debug)]
pub enum Unraveling {
    /// Norm-preserving equation with a pluggable `Ō`.
    Nonlinear(ObarScheme),
    /// Norm-preserving first-order equation in expanded form.
    FirstOrderExplicit(Arc<dyn CoefficientSource>),
    /// Linear first-order equation; states are not normalized.
    Linear(Arc<dyn CoefficientSource>),
    /// White-noise Markov limit.
    Markov,
}

impl core::fmt::Debug for dyn CoefficientSource {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("CoefficientSource")
    }
}

/// How a trajectory draws its noise.
#[derive(Clone, Debug)]
pub enum NoiseSource {
    Ou { gamma: f64 },
    Sampled(Arc<GaussianPathSampler>),
    White,
}

impl NoiseSource {
    pub fn for_kernel(kernel: &Kernel, dt: f64, n_steps: usize) -> Result<Self> {
        match kernel {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(Self::Ou { gamma: *gamma }),
            Kernel::Delta => Ok(Self::White),
            _ => Ok(Self::Sampled(Arc::new(GaussianPathSampler::new(kernel, dt, n_steps)?))),
        }
    }
}

/// Everything needed to run trajectories of one experiment.
#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub model: Model,
    pub kernel: Kernel,
    pub unraveling: Unraveling,
    pub psi0: ComplexVector,
    pub dt: f64,
    pub n_steps: usize,
    /// Record every `stride` steps.
    pub stride: usize,
    noise: NoiseSource,
}

/// `min(1e−2, 0.1/γ, 0.1/ω, 0.1/λ²)` for whichever scales are present.
pub fn default_dt(gamma: Option<f64>, omega: Option<f64>, lambda: Option<f64>) -> f64 {
    let mut dt = 1e-2f64;
    if let Some(g) = gamma.filter(|g| *g > 0.0) {
        dt = dt.min(0.1 / g);
    }
    if let Some(w) = omega.filter(|w| w.abs() > 0.0) {
        dt = dt.min(0.1 / w.abs());
    }
    if let Some(l) = lambda.filter(|l| l.abs() > 0.0) {
        dt = dt.min(0.1 / (l * l));
    }
    dt
}

impl TrajectoryConfig {
    pub fn new(
        model: Model,
        kernel: Kernel,
        unraveling: Unraveling,
        psi0: ComplexVector,
        dt: f64,
        n_steps: usize,
        stride: usize,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be positive and finite"));
        }
        if stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if psi0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: psi0.dim() });
        }
        if (psi0.norm() - 1.0).abs() > 1e-8 {
            return Err(invalid("psi0", "must be normalized"));
        }
        let noise = match unraveling {
            Unraveling::Markov => NoiseSource::White,
            _ => {
                if matches!(kernel, Kernel::Delta) {
                    return Err(Error::Unsupported { what: "colored-noise unravelings", requirement: "a kernel with finite correlation time" });
                }
                NoiseSource::for_kernel(&kernel, dt, n_steps)?
            }
        };
        Ok(Self { model, kernel, unraveling, psi0, dt, n_steps, stride, noise })
    }

    /// Times at which observations are reported.
    pub fn output_times(&self) -> Vec<f64> {
        (0..=self.n_steps).filter(|k| k % self.stride == 0).map(|k| k as f64 * self.dt).collect()
    }

    fn noise_path<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Vec<C64>> {
        match &self.noise {
            NoiseSource::Ou { gamma } => Ok(sample_ou_path_with(*gamma, self.dt, self.n_steps, rng)?.values),
            NoiseSource::Sampled(sampler) => Ok(sampler.sample(rng).values),
            NoiseSource::White => Ok(Vec::new()),
        }
    }
}

/// One recorded point of a trajectory.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub index: usize,
    pub t: f64,
    pub psi: &'a ComplexVector,
    /// Unshifted noise `z_t` (zero for white noise).
    pub z: C64,
    /// `‖ψ‖` for linear trajectories, the norm before renormalization otherwise.
    pub norm: f64,
}

/// Integrates one trajectory, calling `observe` at every output time.
pub fn simulate<R, F>(cfg: &TrajectoryConfig, rng: &mut R, mut observe: F) -> Result<()>
where
    R: RngCore + ?Sized,
    F: FnMut(Sample<'_>) -> Result<()>,
{
    let path = cfg.noise_path(rng)?;
    let z_at = |k: usize| path.get(k).copied().unwrap_or(C64::new(0.0, 0.0));
    let model = &cfg.model;
    let dt = cfg.dt;
    let needs_shift = matches!(cfg.unraveling, Unraveling::Nonlinear(_) | Unraveling::FirstOrderExplicit(_));
    let shift = if needs_shift { Some(ShiftAccumulator::new(&cfg.kernel, dt, cfg.n_steps)?) } else { None };
    let scheme = match &cfg.unraveling {
        Unraveling::Nonlinear(s) => Some(s.clone()),
        _ => None,
    };
    let mut state = TrajectoryState::new(cfg.psi0.clone(), shift, scheme)?;
    let mut linear_psi = cfg.psi0.clone();
    let mut norm = 1.0;
    let mut record = |k: usize, state: &TrajectoryState, linear: &ComplexVector, norm: f64| -> Result<()> {
        if !k.is_multiple_of(cfg.stride) {
            return Ok(());
        }
        let psi = if matches!(cfg.unraveling, Unraveling::Linear(_)) { linear } else { &state.psi };
        observe(Sample { index: k / cfg.stride, t: k as f64 * dt, psi, z: z_at(k), norm })
    };
    record(0, &state, &linear_psi, norm)?;
    for k in 0..cfg.n_steps {
        let noise = StageNoise { start: z_at(k), end: z_at(k + 1) };
        norm = match &cfg.unraveling {
            Unraveling::Nonlinear(_) => step_nonlinear_qsd(&mut state, model, noise, dt)?,
            Unraveling::FirstOrderExplicit(src) => step_first_order_qsd(&mut state, model, src.as_ref(), noise, dt)?,
            Unraveling::Linear(src) => {
                linear_psi = step_linear_qsd(&linear_psi, k as f64 * dt, model, src.as_ref(), noise, dt)?;
                check_finite(&linear_psi, k)?;
                linear_psi.norm()
            }
            Unraveling::Markov => {
                let dw = complex_gaussian(rng, dt);
                step_markov_qsd(&mut state, model, dw, dt)?
            }
        };
        record(k + 1, &state, &linear_psi, norm)?;
    }
    Ok(())
}

/// Observable time series of a single trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `values[i][j]` is `Re⟨ψ|A_j|ψ⟩` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

/// Runs trajectory 0 of the stream family seeded by `seed`.
pub fn run_trajectory(cfg: &TrajectoryConfig, seed: u64, observables: &[ComplexMatrix]) -> Result<TrajectoryRecord> {
    let mut rng = trajectory_rng(seed, 0);
    let mut rec = TrajectoryRecord { times: Vec::new(), values: Vec::new(), norms: Vec::new() };
    simulate(cfg, &mut rng, |s| {
        rec.times.push(s.t);
        rec.values.push(observables.iter().map(|a| Ok(s.psi.inner(&a.apply(s.psi)?).re)).collect::<Result<Vec<_>>>()?);
        rec.norms.push(s.norm);
        Ok(())
    })?;
    Ok(rec)
}
