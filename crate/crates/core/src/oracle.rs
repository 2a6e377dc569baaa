//! Brute-force reference: the system coupled to a finite set of bath modes,
//! evolved unitarily from the vacuum and traced over the bath.
//!
//! The total Hamiltonian is `H + Σ ω_k a_k†a_k + Σ g_k (L a_k† + L† a_k)`,
//! whose bath correlation is `Σ g_k² e^{−iω_k τ}`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::integrate::rk4_step;
use crate::kernels::Kernel;
use crate::linalg::{ComplexMatrix, ComplexVector, C64, I};
use crate::master::{DensityMatrix, MasterSeries};
use crate::model::{Model, ModelKind};
use crate::quadrature::GaussLegendre;

/// Largest joint Hilbert space [`evolve_total`] accepts.
pub const MAX_JOINT_DIM: usize = 4096;

/// Largest `‖H_tot‖·h` allowed for an RK4 substep.
const MAX_PHASE_PER_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathMode {
    pub frequency: f64,
    pub coupling: f64,
}

/// Finite set of harmonic bath modes with a per-mode Fock cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedBath {
    pub modes: Vec<BathMode>,
    /// Number of Fock levels kept per mode in the full tensor-product basis.
    pub fock_cutoff: usize,
}

impl DiscretizedBath {
    pub fn new(modes: Vec<BathMode>, fock_cutoff: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("modes", "at least one mode is needed"));
        }
        if fock_cutoff < 2 {
            return Err(invalid("fock_cutoff", "must keep at least two levels"));
        }
        if modes.iter().any(|m| !m.frequency.is_finite() || !m.coupling.is_finite()) {
            return Err(invalid("modes", "must be finite"));
        }
        Ok(Self { modes, fock_cutoff })
    }

    /// Modes on the uniform grid `ω_k = k·δω`, `|ω_k| ≤ max_frequency`,
    /// with `g_k² = J(ω_k)·δω`. The correlation recurs after `2π/δω`.
    pub fn uniform(kernel: &Kernel, spacing: f64, max_frequency: f64) -> Result<Self> {
        if !(spacing > 0.0 && max_frequency >= spacing) {
            return Err(invalid("spacing", "need 0 < spacing ≤ max_frequency"));
        }
        let m = (max_frequency / spacing).floor() as i64;
        let modes = (-m..=m)
            .map(|k| {
                let w = k as f64 * spacing;
                Ok(BathMode { frequency: w, coupling: (kernel.spectral_density(w)? * spacing).sqrt() })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes.into_iter().filter(|m| m.coupling > 0.0).collect(), 2)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `Σ g_k² e^{−iω_k τ}`
    pub fn correlation(&self, lag: f64) -> C64 {
        self.modes.iter().map(|m| C64::from_polar(m.coupling * m.coupling, -m.frequency * lag)).sum()
    }

    fn residual_integrals(&self, kernel: &Kernel, t_max: f64) -> Result<(f64, f64, f64)> {
        let gl = GaussLegendre::new(16);
        let panels = 64 + (t_max * self.modes.iter().map(|m| m.frequency.abs()).fold(0.0, f64::max) / PI).ceil() as usize;
        let h = t_max / panels as f64;
        let (mut diff_sq, mut ref_sq, mut diff_abs) = (0.0, 0.0, 0.0);
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let tau = a + 0.5 * h * (x + 1.0);
                let target = kernel.correlation(tau)?;
                let d = (self.correlation(tau) - target).norm();
                let wt = 0.5 * h * w;
                diff_sq += wt * d * d;
                ref_sq += wt * target.norm_sqr();
                diff_abs += wt * d;
            }
        }
        Ok((diff_sq, ref_sq, diff_abs))
    }

    /// Relative L² misfit `‖Σg²e^{−iωτ} − α(τ)‖ / ‖α‖` over `τ ∈ [0, t_max]`.
    pub fn residual(&self, kernel: &Kernel, t_max: f64) -> Result<f64> {
        let (d, r, _) = self.residual_integrals(kernel, t_max)?;
        Ok((d / r).sqrt())
    }

    /// Absolute L¹ misfit `∫₀^{t_max} |Σg²e^{−iωτ} − α(τ)| dτ`.
    pub fn l1_misfit(&self, kernel: &Kernel, t_max: f64) -> Result<f64> {
        Ok(self.residual_integrals(kernel, t_max)?.2)
    }

    /// Bound on the excited-population error caused by the kernel misfit for
    /// a single-excitation model with coupling strength `lambda`.
    ///
    /// The excited amplitude solves a Volterra equation whose homogeneous
    /// propagator is a matrix element of a unitary, hence bounded by one.
    /// Duhamel's formula then moves the amplitude by at most
    /// `ε = λ² t_max ∫|δα|`, and the population by at most `2ε + ε²`.
    pub fn population_error_bound(&self, kernel: &Kernel, lambda: f64, t_max: f64) -> Result<f64> {
        let eps = lambda * lambda * t_max * self.l1_misfit(kernel, t_max)?;
        Ok(2.0 * eps + eps * eps)
    }
}

/// A fitted bath together with its misfit.
#[derive(Clone, Debug, PartialEq)]
pub struct BathFit {
    pub bath: DiscretizedBath,
    pub residual: f64,
}

/// Places `n_modes` modes by Gauss quadrature on the kernel's spectral
/// density. For the OU kernel the Lorentzian is mapped to a flat weight by
/// `ω = γ tan θ`; for the Ohmic kernel Gauss-Legendre nodes cover `[−Λ, Λ]`.
pub fn fit_bath(kernel: &Kernel, n_modes: usize, t_max: f64) -> Result<BathFit> {
    if n_modes == 0 {
        return Err(invalid("n_modes", "must be at least 1"));
    }
    if !(t_max > 0.0) {
        return Err(invalid("t_max", "must be positive"));
    }
    let gl = GaussLegendre::new(n_modes);
    let modes: Vec<BathMode> = match kernel {
        Kernel::OrnsteinUhlenbeck { gamma } => gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(x, w)| {
                let theta = 0.5 * PI * x;
                BathMode { frequency: gamma * theta.tan(), coupling: (gamma / (2.0 * PI) * 0.5 * PI * w).sqrt() }
            })
            .collect(),
        Kernel::Ohmic(bath) => gl
            .nodes
            .iter()
            .zip(&gl.weights)
            .map(|(x, w)| {
                let omega = bath.cutoff * x;
                BathMode { frequency: omega, coupling: (bath.spectral_density(omega) * bath.cutoff * w).sqrt() }
            })
            .collect(),
        _ => return Err(Error::Unsupported { what: "bath fitting", requirement: "an OU or Ohmic kernel" }),
    };
    let bath = DiscretizedBath::new(modes, 2)?;
    let residual = bath.residual(kernel, t_max)?;
    Ok(BathFit { bath, residual })
}

/// Which joint basis the evolution uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointBasis {
    /// `{|+,0⟩, |−,0⟩, |−,1_k⟩}`, exact for the dissipative model with a vacuum bath.
    SingleExcitation,
    /// Full product of the system space and every mode's truncated Fock space.
    Full,
}

/// Reduced states from the joint evolution.
#[derive(Clone, Debug)]
pub struct OracleRun {
    pub series: MasterSeries,
    pub basis: JointBasis,
    pub joint_dim: usize,
    /// Largest `|‖Ψ‖ − 1|` seen at an output time.
    pub max_norm_drift: f64,
    pub substeps: usize,
}

trait JointSpace {
    fn dim(&self) -> usize;
    fn apply(&self, psi: &ComplexVector) -> ComplexVector;
    fn norm_bound(&self) -> f64;
    fn embed(&self, psi0: &ComplexVector) -> ComplexVector;
    fn reduce(&self, psi: &ComplexVector) -> ComplexMatrix;
}

struct SingleExcitation {
    omega: f64,
    lambda: f64,
    modes: Vec<BathMode>,
}

impl JointSpace for SingleExcitation {
    fn dim(&self) -> usize {
        2 + self.modes.len()
    }

    fn apply(&self, psi: &ComplexVector) -> ComplexVector {
        let v = psi.as_slice();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        out[0] = v[0] * (0.5 * self.omega);
        out[1] = v[1] * (-0.5 * self.omega);
        for (k, m) in self.modes.iter().enumerate() {
            let g = self.lambda * m.coupling;
            out[0] += v[2 + k] * g;
            out[2 + k] = v[2 + k] * (m.frequency - 0.5 * self.omega) + v[0] * g;
        }
        ComplexVector::new(out)
    }

    fn norm_bound(&self) -> f64 {
        let max_freq = self.modes.iter().map(|m| m.frequency.abs()).fold(0.0, f64::max);
        let coupling = self.modes.iter().map(|m| m.coupling * m.coupling).sum::<f64>().sqrt() * self.lambda.abs();
        0.5 * self.omega.abs() + max_freq + coupling
    }

    fn embed(&self, psi0: &ComplexVector) -> ComplexVector {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[0] = psi0[0];
        v[1] = psi0[1];
        ComplexVector::new(v)
    }

    fn reduce(&self, psi: &ComplexVector) -> ComplexMatrix {
        let v = psi.as_slice();
        let bath: f64 = v[2..].iter().map(|x| x.norm_sqr()).sum();
        ComplexMatrix::from_rows([[C64::new(v[0].norm_sqr(), 0.0), v[0] * v[1].conj()], [v[1] * v[0].conj(), C64::new(v[1].norm_sqr() + bath, 0.0)]])
    }
}

struct FullProduct {
    h: ComplexMatrix,
    l: ComplexMatrix,
    modes: Vec<BathMode>,
    cutoff: usize,
    bath_dim: usize,
}

impl FullProduct {
    fn occupation(&self, bath_index: usize, mode: usize) -> usize {
        (bath_index / self.cutoff.pow(mode as u32)) % self.cutoff
    }
}

impl JointSpace for FullProduct {
    fn dim(&self) -> usize {
        self.h.dim() * self.bath_dim
    }

    fn apply(&self, psi: &ComplexVector) -> ComplexVector {
        let d = self.h.dim();
        let nb = self.bath_dim;
        let v = psi.as_slice();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for b in 0..nb {
            let energy: f64 = self.modes.iter().enumerate().map(|(k, m)| m.frequency * self.occupation(b, k) as f64).sum();
            for i in 0..d {
                let mut acc = v[i * nb + b] * energy;
                for j in 0..d {
                    acc += self.h[(i, j)] * v[j * nb + b];
                }
                out[i * nb + b] += acc;
            }
            for (k, m) in self.modes.iter().enumerate() {
                let n = self.occupation(b, k);
                let stride = self.cutoff.pow(k as u32);
                // g L a† maps bath state b (n quanta) to b + stride (n + 1 quanta).
                if n + 1 < self.cutoff {
                    let amp = m.coupling * ((n + 1) as f64).sqrt();
                    for i in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            acc += self.l[(i, j)] * v[j * nb + b];
                        }
                        out[i * nb + b + stride] += acc * amp;
                    }
                }
                if n > 0 {
                    let amp = m.coupling * (n as f64).sqrt();
                    for i in 0..d {
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..d {
                            acc += self.l[(j, i)].conj() * v[j * nb + b];
                        }
                        out[i * nb + b - stride] += acc * amp;
                    }
                }
            }
        }
        ComplexVector::new(out)
    }

    fn norm_bound(&self) -> f64 {
        let row_sum = |m: &ComplexMatrix| (0..m.dim()).map(|i| (0..m.dim()).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
        let n_max = (self.cutoff - 1) as f64;
        let bath: f64 = self.modes.iter().map(|m| m.frequency.abs() * n_max).sum();
        let coupling: f64 = self.modes.iter().map(|m| 2.0 * m.coupling * n_max.sqrt()).sum::<f64>() * row_sum(&self.l).max(row_sum(&self.l.dagger()));
        row_sum(&self.h) + bath + coupling
    }

    fn embed(&self, psi0: &ComplexVector) -> ComplexVector {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        for i in 0..self.h.dim() {
            v[i * self.bath_dim] = psi0[i];
        }
        ComplexVector::new(v)
    }

    fn reduce(&self, psi: &ComplexVector) -> ComplexMatrix {
        let d = self.h.dim();
        let nb = self.bath_dim;
        let v = psi.as_slice();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = (0..nb).map(|b| v[i * nb + b] * v[j * nb + b].conj()).sum();
            }
        }
        ComplexMatrix::from_vec(d, data).expect("square")
    }
}

/// Evolves `ψ₀ ⊗ |vac⟩` under the total Hamiltonian and records the reduced
/// system state every `stride` steps. Each step of size `dt` is split into
/// RK4 substeps small enough for the joint Hamiltonian's norm.
pub fn evolve_total(model: &Model, bath: &DiscretizedBath, psi0: &ComplexVector, dt: f64, n_steps: usize, stride: usize) -> Result<OracleRun> {
    if psi0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: psi0.dim() });
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(invalid("psi0", "must be normalized"));
    }
    if !(dt > 0.0 && dt.is_finite()) || stride == 0 {
        return Err(invalid("dt/stride", "need dt > 0 and stride ≥ 1"));
    }
    match model.kind() {
        ModelKind::Dissipative { omega, lambda } => {
            let space = SingleExcitation { omega, lambda, modes: bath.modes.clone() };
            run(&space, JointBasis::SingleExcitation, psi0, dt, n_steps, stride)
        }
        _ => {
            let mut bath_dim = 1usize;
            for _ in &bath.modes {
                bath_dim = bath_dim.saturating_mul(bath.fock_cutoff);
            }
            let dim = bath_dim.saturating_mul(model.dim());
            if dim > MAX_JOINT_DIM {
                return Err(Error::DimensionBound { dim, max: MAX_JOINT_DIM });
            }
            let space = FullProduct { h: model.h().clone(), l: model.l().clone(), modes: bath.modes.clone(), cutoff: bath.fock_cutoff, bath_dim };
            run(&space, JointBasis::Full, psi0, dt, n_steps, stride)
        }
    }
}

fn run<S: JointSpace>(space: &S, basis: JointBasis, psi0: &ComplexVector, dt: f64, n_steps: usize, stride: usize) -> Result<OracleRun> {
    let substeps = ((space.norm_bound() * dt / MAX_PHASE_PER_STEP).ceil() as usize).max(1);
    let h = dt / substeps as f64;
    let mut psi = space.embed(psi0);
    let mut series = MasterSeries { times: vec![0.0], states: vec![DensityMatrix::new(space.reduce(&psi))?], untrusted: false };
    let mut max_norm_drift = 0.0f64;
    for k in 1..=n_steps {
        for _ in 0..substeps {
            psi = rk4_step(&psi, 0.0, h, |_, v| Ok::<_, Error>(space.apply(v).scale(-I)))?;
        }
        if !psi.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        if k % stride == 0 {
            max_norm_drift = max_norm_drift.max((psi.norm() - 1.0).abs());
            let rho = space.reduce(&psi).scale_real(1.0 / psi.norm_sqr());
            series.times.push(k as f64 * dt);
            series.states.push(DensityMatrix::new(rho.hermitian_part())?);
        }
    }
    Ok(OracleRun { series, basis, joint_dim: space.dim(), max_norm_drift, substeps })
}
