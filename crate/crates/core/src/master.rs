//! Density-matrix propagators and positivity diagnostics.
//!
//! Every propagator is a fixed-step RK4 integrator. Positivity is reported,
//! never enforced.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::integrate::rk4_step;
use crate::kernels::{CoefficientSource, FirstOrderCoeffs, Kernel};
use crate::linalg::{anticommutator, commutator, hermitian_eigen, ladder_ops, pauli_basis, ComplexMatrix, ComplexVector, C64, I};
use crate::model::{Model, ModelKind};
use crate::obar::{functional_zeroth_rhs, riccati_rhs};

/// Hermitian, unit-trace density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates trace (1e−9) and Hermiticity (1e−10).
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        if (rho.trace() - C64::new(1.0, 0.0)).norm() > 1e-9 {
            return Err(invalid("rho", "trace must be one"));
        }
        if rho.hermiticity_error() > 1e-10 {
            return Err(invalid("rho", "must be Hermitian"));
        }
        Ok(Self(rho))
    }

    pub fn from_pure(psi: &ComplexVector) -> Result<Self> {
        Self::new(psi.projector().scale_real(1.0 / psi.norm_sqr()))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `tr(Aρ)`
    pub fn expect(&self, op: &ComplexMatrix) -> C64 {
        let n = self.dim();
        let mut sum = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                sum += op[(i, j)] * self.0[(j, i)];
            }
        }
        sum
    }

    pub fn diagnostics(&self) -> Diagnostics {
        diagnostics(&self.0)
    }
}

/// Health report for a propagated density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Euclidean norm of the Bloch vector, for two-level systems only.
    pub bloch_norm: Option<f64>,
}

pub fn diagnostics(rho: &ComplexMatrix) -> Diagnostics {
    let bloch_norm = (rho.dim() == 2).then(|| {
        let s = pauli_basis();
        let d = DensityMatrix(rho.clone());
        let v = [d.expect(&s.x).re, d.expect(&s.y).re, d.expect(&s.z).re];
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    });
    Diagnostics {
        trace_error: (rho.trace() - C64::new(1.0, 0.0)).norm(),
        hermiticity_error: rho.hermiticity_error(),
        min_eigenvalue: hermitian_eigen(rho).values[0],
        bloch_norm,
    }
}

fn comm(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    commutator(a, b).expect("operators share the density matrix dimension")
}

/// `ρ̇ = −i[H,ρ] + LρL† − ½{L†L, ρ}`
pub fn lindblad_rhs(model: &Model, rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = comm(model.h(), rho).scale(-I);
    out += &(&(model.l() * rho) * model.l_dag());
    out.add_scaled(C64::new(-0.5, 0.0), &anticommutator(model.l_dag_l(), rho).expect("same dimension"));
    out
}

/// Post-Markov master equation with first-order coefficients `g`.
pub fn first_order_rhs(model: &Model, g: &FirstOrderCoeffs, rho: &ComplexMatrix) -> ComplexMatrix {
    let l = model.l();
    let ld = model.l_dag();
    let ldl = model.l_dag_l();
    let hl = model.h_l();
    let cubic = model.lindblad_cubic();
    let mut out = comm(model.h(), rho).scale(-I);
    out.add_scaled(g.g0 + g.g0.conj(), &(&(l * rho) * ld));
    out.add_scaled(-g.g0, &(ldl * rho));
    out.add_scaled(-g.g0.conj(), &(rho * ldl));
    out.add_scaled(I * g.g1, &comm(ld, &(hl * rho)));
    out.add_scaled(-I * g.g1.conj(), &comm(&(rho * &hl.dagger()), l));
    out.add_scaled(g.g2, &comm(ld, &(cubic * rho)));
    out.add_scaled(g.g2.conj(), &comm(&(rho * &cubic.dagger()), l));
    out
}

/// `ρ̇ = −i[H,ρ] + [L, ρŌ†] + [Ōρ, L†]`, exact whenever `Ō` is noise-independent.
pub fn obar_master_rhs(model: &Model, obar: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = comm(model.h(), rho).scale(-I);
    out += &comm(model.l(), &(rho * &obar.dagger()));
    out += &comm(&(obar * rho), model.l_dag());
    out
}

/// Oscillator master equations; the model's coupling operator is the position `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QbmVariant {
    /// `−i[H,ρ] − g0R[q,[q,ρ]] − i g0I[q²,ρ]`
    Zeroth,
    /// Zeroth plus `g1R[q,[p,ρ]] + i g1I[q,{p,ρ}]`
    First,
    /// `−i[H,ρ] − i(η/2)[q,{p,ρ}] − ηkT[q,[q,ρ]]`
    CaldeiraLeggett { eta: f64, kt: f64 },
}

pub fn qbm_rhs(model: &Model, p: &ComplexMatrix, variant: QbmVariant, g: &FirstOrderCoeffs, rho: &ComplexMatrix) -> ComplexMatrix {
    let q = model.l();
    let mut out = comm(model.h(), rho).scale(-I);
    let qq_rho = comm(q, &comm(q, rho));
    let q_anti_p = || comm(q, &anticommutator(p, rho).expect("same dimension"));
    match variant {
        QbmVariant::Zeroth | QbmVariant::First => {
            out.add_scaled(C64::new(-g.g0.re, 0.0), &qq_rho);
            out.add_scaled(C64::new(0.0, -g.g0.im), &comm(&(q * q), rho));
            if variant == QbmVariant::First {
                out.add_scaled(C64::new(g.g1.re, 0.0), &comm(q, &comm(p, rho)));
                out.add_scaled(C64::new(0.0, g.g1.im), &q_anti_p());
            }
        }
        QbmVariant::CaldeiraLeggett { eta, kt } => {
            out.add_scaled(C64::new(0.0, -0.5 * eta), &q_anti_p());
            out.add_scaled(C64::new(-eta * kt, 0.0), &qq_rho);
        }
    }
    out
}

/// Harmonic oscillator `H = p²/2 + (ω0²/2 + shift) q²` on `n_levels` Fock
/// states coupled through `q`. Returns the model and the momentum operator.
/// The `shift` argument lets callers absorb a frequency renormalization.
pub fn harmonic_oscillator(n_levels: usize, omega0: f64, shift: f64) -> Result<(Model, ComplexMatrix)> {
    let (q, p) = ladder_ops(n_levels)?;
    let mut h = (&p * &p).scale_real(0.5);
    h.add_scaled(C64::new(0.5 * omega0 * omega0 + shift, 0.0), &(&q * &q));
    Ok((Model::new(h, q)?, p))
}

/// Choice of master equation.
#[derive(Clone)]
pub enum MasterScheme {
    Lindblad,
    /// Post-Markov equation with time-dependent coefficients.
    FirstOrder(Arc<dyn CoefficientSource>),
    /// Post-Markov equation with coefficients frozen at their long-time values.
    FirstOrderLongTime(FirstOrderCoeffs),
    /// Noise-independent `Ō₀` co-evolved with the density matrix (OU kernel).
    FunctionalZeroth { gamma: f64 },
    /// Exact equation of the dissipative model with OU noise.
    ExactDissipative { gamma: f64, omega: f64, lambda: f64 },
    QbmZeroth(Arc<dyn CoefficientSource>),
    QbmFirst { coeffs: Arc<dyn CoefficientSource>, p: ComplexMatrix },
    CaldeiraLeggett { eta: f64, kt: f64, p: ComplexMatrix },
}

impl fmt::Debug for MasterScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl MasterScheme {
    pub fn first_order<S: CoefficientSource + 'static>(source: S) -> Self {
        Self::FirstOrder(Arc::new(source))
    }

    pub fn long_time(kernel: &Kernel) -> Result<Self> {
        Ok(Self::FirstOrderLongTime(kernel.asymptotic_first_order()?))
    }

    pub fn functional_zeroth(kernel: &Kernel) -> Result<Self> {
        match kernel {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(Self::FunctionalZeroth { gamma: *gamma }),
            _ => Err(Error::Unsupported { what: "the functional zeroth-order master equation", requirement: "an OU kernel" }),
        }
    }

    pub fn exact_dissipative(model: &Model, kernel: &Kernel) -> Result<Self> {
        match (model.kind(), kernel) {
            (ModelKind::Dissipative { omega, lambda }, Kernel::OrnsteinUhlenbeck { gamma }) => {
                Ok(Self::ExactDissipative { gamma: *gamma, omega, lambda })
            }
            _ => Err(Error::Unsupported { what: "the exact master equation", requirement: "the dissipative model with an OU kernel" }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MasterScheme::Lindblad => "lindblad",
            MasterScheme::FirstOrder(_) => "first-order",
            MasterScheme::FirstOrderLongTime(_) => "long-time",
            MasterScheme::FunctionalZeroth { .. } => "functional-zeroth",
            MasterScheme::ExactDissipative { .. } => "exact",
            MasterScheme::QbmZeroth(_) => "qbm-zeroth",
            MasterScheme::QbmFirst { .. } => "qbm-first",
            MasterScheme::CaldeiraLeggett { .. } => "caldeira-leggett",
        }
    }

    /// Whether the generator changes with time.
    pub fn is_time_dependent(&self) -> bool {
        !matches!(self, MasterScheme::Lindblad | MasterScheme::FirstOrderLongTime(_) | MasterScheme::CaldeiraLeggett { .. })
    }

    fn is_oscillator(&self) -> bool {
        matches!(self, MasterScheme::QbmZeroth(_) | MasterScheme::QbmFirst { .. } | MasterScheme::CaldeiraLeggett { .. })
    }
}

#[derive(Clone, Debug)]
enum Auxiliary {
    None,
    Obar(ComplexMatrix),
    Riccati(C64),
}

/// Top-two-level population above which a truncated oscillator run is flagged.
pub const TRUNCATION_THRESHOLD: f64 = 1e-3;

fn edge_population(rho: &ComplexMatrix) -> f64 {
    let n = rho.dim();
    rho[(n - 1, n - 1)].re + rho[(n - 2, n - 2)].re
}

/// Stateful RK4 propagator for one master equation.
#[derive(Clone, Debug)]
pub struct MasterPropagator {
    model: Model,
    scheme: MasterScheme,
    rho: ComplexMatrix,
    aux: Auxiliary,
    t: f64,
    steps: usize,
    untrusted: bool,
}

impl MasterPropagator {
    pub fn new(model: Model, scheme: MasterScheme, rho0: DensityMatrix) -> Result<Self> {
        if rho0.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.dim() });
        }
        if scheme.is_oscillator() && model.dim() < 3 {
            return Err(invalid("n_levels", "oscillator equations need at least three levels"));
        }
        let aux = match &scheme {
            MasterScheme::FunctionalZeroth { .. } => Auxiliary::Obar(ComplexMatrix::zeros(model.dim())),
            MasterScheme::ExactDissipative { .. } => Auxiliary::Riccati(C64::new(0.0, 0.0)),
            _ => Auxiliary::None,
        };
        let mut prop = Self { model, scheme, rho: rho0.into_matrix(), aux, t: 0.0, steps: 0, untrusted: false };
        prop.check_truncation();
        Ok(prop)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rho(&self) -> DensityMatrix {
        DensityMatrix(self.rho.clone())
    }

    /// True once an oscillator run has populated the truncation edge.
    pub fn untrusted(&self) -> bool {
        self.untrusted
    }

    fn check_truncation(&mut self) {
        if self.scheme.is_oscillator() && edge_population(&self.rho) > TRUNCATION_THRESHOLD {
            self.untrusted = true;
        }
    }

    fn rhs(&self, t: f64, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let m = &self.model;
        Ok(match &self.scheme {
            MasterScheme::Lindblad => lindblad_rhs(m, rho),
            MasterScheme::FirstOrder(src) => first_order_rhs(m, &src.first_order(t)?, rho),
            MasterScheme::FirstOrderLongTime(g) => first_order_rhs(m, g, rho),
            MasterScheme::QbmZeroth(src) => qbm_rhs(m, m.l(), QbmVariant::Zeroth, &src.first_order(t)?, rho),
            MasterScheme::QbmFirst { coeffs, p } => qbm_rhs(m, p, QbmVariant::First, &coeffs.first_order(t)?, rho),
            MasterScheme::CaldeiraLeggett { eta, kt, p } => {
                qbm_rhs(m, p, QbmVariant::CaldeiraLeggett { eta: *eta, kt: *kt }, &FirstOrderCoeffs::default(), rho)
            }
            MasterScheme::FunctionalZeroth { .. } | MasterScheme::ExactDissipative { .. } => unreachable!("co-evolved schemes"),
        })
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let t = self.t;
        let m = &self.model;
        match (&self.scheme, &self.aux) {
            (MasterScheme::FunctionalZeroth { gamma }, Auxiliary::Obar(obar)) => {
                let g = *gamma;
                let (rho, obar) = rk4_step(&(self.rho.clone(), obar.clone()), t, dt, |_, (r, o)| {
                    Ok::<_, Error>((obar_master_rhs(m, o, r), functional_zeroth_rhs(m, g, o)))
                })?;
                self.rho = rho;
                self.aux = Auxiliary::Obar(obar);
            }
            (MasterScheme::ExactDissipative { gamma, omega, lambda }, Auxiliary::Riccati(f)) => {
                let (g, w, l) = (*gamma, *omega, *lambda);
                let minus = pauli_basis().minus;
                let (rho, f) = rk4_step(&(self.rho.clone(), *f), t, dt, |_, (r, f)| {
                    Ok::<_, Error>((obar_master_rhs(m, &minus.scale(*f), r), riccati_rhs(w, l, g, *f)))
                })?;
                self.rho = rho;
                self.aux = Auxiliary::Riccati(f);
            }
            _ => {
                self.rho = rk4_step(&self.rho, t, dt, |t, r| self.rhs(t, r))?;
            }
        }
        if !self.rho.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        self.t += dt;
        self.steps += 1;
        self.check_truncation();
        Ok(())
    }
}

/// Density matrices recorded on an output grid.
#[derive(Clone, Debug)]
pub struct MasterSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Set when an oscillator run reached the truncation edge.
    pub untrusted: bool,
}

impl MasterSeries {
    pub fn expectation(&self, op: &ComplexMatrix) -> Vec<f64> {
        self.states.iter().map(|r| r.expect(op).re).collect()
    }
}

/// Propagates `n_steps` steps of size `dt`, recording every `stride` steps.
pub fn propagate(model: &Model, scheme: &MasterScheme, rho0: &DensityMatrix, dt: f64, n_steps: usize, stride: usize) -> Result<MasterSeries> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    let mut prop = MasterPropagator::new(model.clone(), scheme.clone(), rho0.clone())?;
    let mut series = MasterSeries { times: alloc::vec![0.0], states: alloc::vec![prop.rho()], untrusted: false };
    for k in 1..=n_steps {
        prop.step(dt)?;
        if k % stride == 0 {
            series.times.push(k as f64 * dt);
            series.states.push(prop.rho());
        }
    }
    series.untrusted = prop.untrusted();
    Ok(series)
}

/// One RK4 step of the Lindblad equation.
pub fn step_lindblad(rho: &DensityMatrix, model: &Model, dt: f64) -> Result<DensityMatrix> {
    let next = rk4_step(rho.matrix(), 0.0, dt, |_, r| Ok::<_, Error>(lindblad_rhs(model, r)))?;
    Ok(DensityMatrix(next))
}

/// One RK4 step of the post-Markov equation from `t` to `t + dt`.
pub fn step_first_order_master(rho: &DensityMatrix, model: &Model, coeffs: &dyn CoefficientSource, t: f64, dt: f64) -> Result<DensityMatrix> {
    let next = rk4_step(rho.matrix(), t, dt, |s, r| Ok(first_order_rhs(model, &coeffs.first_order(s)?, r)))?;
    Ok(DensityMatrix(next))
}

/// One RK4 step of the post-Markov equation with OU coefficients frozen at
/// `g0 = 1/2`, `g1 = 1/(2γ)`, `g2 = 1/(4γ)`.
pub fn step_first_order_longtime(rho: &DensityMatrix, model: &Model, gamma: f64, dt: f64) -> Result<DensityMatrix> {
    let g = Kernel::ornstein_uhlenbeck(gamma)?.asymptotic_first_order()?;
    let next = rk4_step(rho.matrix(), 0.0, dt, |_, r| Ok::<_, Error>(first_order_rhs(model, &g, r)))?;
    Ok(DensityMatrix(next))
}

/// One RK4 step of the equation driven by a prescribed `Ō(t)`.
pub fn step_functional_zeroth_master<F>(rho: &DensityMatrix, model: &Model, obar: F, t: f64, dt: f64) -> Result<DensityMatrix>
where
    F: Fn(f64) -> ComplexMatrix,
{
    let next = rk4_step(rho.matrix(), t, dt, |s, r| Ok::<_, Error>(obar_master_rhs(model, &obar(s), r)))?;
    Ok(DensityMatrix(next))
}

/// One RK4 step of an oscillator equation; the flag reports truncation overflow.
pub fn step_qbm(
    rho: &DensityMatrix,
    model: &Model,
    p: &ComplexMatrix,
    variant: QbmVariant,
    coeffs: &dyn CoefficientSource,
    t: f64,
    dt: f64,
) -> Result<(DensityMatrix, bool)> {
    let next = rk4_step(rho.matrix(), t, dt, |s, r| {
        let g = match variant {
            QbmVariant::CaldeiraLeggett { .. } => FirstOrderCoeffs::default(),
            _ => coeffs.first_order(s)?,
        };
        Ok(qbm_rhs(model, p, variant, &g, r))
    })?;
    let flag = edge_population(&next) > TRUNCATION_THRESHOLD;
    Ok((DensityMatrix(next), flag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Frozen;
    use crate::linalg::{c, re, trace_distance};
    use alloc::vec;

    fn ou(gamma: f64) -> Kernel {
        Kernel::ornstein_uhlenbeck(gamma).unwrap()
    }

    fn excited() -> DensityMatrix {
        DensityMatrix::from_pure(&ComplexVector::basis(2, 0)).unwrap()
    }

    #[test]
    fn diagnostics_examples() {
        let half = diagnostics(&ComplexMatrix::identity(2).scale_real(0.5));
        assert_eq!(half.bloch_norm, Some(0.0));
        assert!((half.min_eigenvalue - 0.5).abs() < 1e-15);
        let up = excited().diagnostics();
        assert!((up.bloch_norm.unwrap() - 1.0).abs() < 1e-15);
        assert!(up.min_eigenvalue.abs() < 1e-15);
        assert!(diagnostics(&ComplexMatrix::identity(3).scale_real(1.0 / 3.0)).bloch_norm.is_none());
    }

    #[test]
    fn lindblad_decay_is_exponential() {
        let lambda = 0.9;
        let m = Model::dissipative(1.0, lambda).unwrap();
        let s = pauli_basis();
        let series = propagate(&m, &MasterScheme::Lindblad, &excited(), 0.01, 300, 10).unwrap();
        let pop = series.expectation(&(&s.plus * &s.minus));
        for (t, p) in series.times.iter().zip(pop) {
            assert!((p - (-lambda * lambda * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn uncoupled_evolution_is_unitary() {
        let m = Model::driven(1.0, 1.0).unwrap().uncoupled();
        let rho = DensityMatrix::new(ComplexMatrix::from_rows([[re(0.7), c(0.1, 0.2)], [c(0.1, -0.2), re(0.3)]])).unwrap();
        let before = hermitian_eigen(rho.matrix()).values;
        let mut r = rho;
        for _ in 0..100 {
            r = step_lindblad(&r, &m, 0.01).unwrap();
        }
        let after = hermitian_eigen(r.matrix()).values;
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_kernel_first_order_is_lindblad() {
        let m = Model::driven(1.0, 0.7).unwrap();
        let rho = DensityMatrix::from_pure(&ComplexVector::normalized_from(vec![re(0.6), c(0.0, 0.8)]).unwrap()).unwrap();
        let a = first_order_rhs(&m, &Kernel::Delta.first_order(0.5).unwrap(), rho.matrix());
        assert!(a.approx_eq(&lindblad_rhs(&m, rho.matrix()), 1e-14));
    }

    #[test]
    fn first_order_reduces_to_dissipative_form() {
        let (omega, lambda) = (1.2, 0.8);
        let m = Model::dissipative(omega, lambda).unwrap();
        let g = FirstOrderCoeffs { g0: re(0.3), g1: re(0.04), g2: re(0.01) };
        let rho = DensityMatrix::new(ComplexMatrix::from_rows([[re(0.6), c(0.2, 0.1)], [c(0.2, -0.1), re(0.4)]])).unwrap();
        let r = rho.matrix();
        let s = pauli_basis();
        let pm = &s.plus * &s.minus;
        let smr = &(&s.minus * r) * &s.plus;
        let l2 = lambda * lambda;
        let mut expected = comm(&s.z, r).scale(C64::new(0.0, -0.5 * omega));
        let mut lind = smr.scale_real(2.0);
        lind -= &anticommutator(&pm, r).unwrap();
        expected.add_scaled(g.g0 * l2, &lind);
        expected.add_scaled(-I * g.g1 * l2 * omega, &comm(&pm, r));
        expected.add_scaled(-g.g2 * l2 * l2, &anticommutator(&pm, r).unwrap());
        expected.add_scaled(g.g2 * 2.0 * l2 * l2, &smr);
        assert!(first_order_rhs(&m, &g, r).approx_eq(&expected, 1e-14));
    }

    #[test]
    fn first_order_reduces_to_driven_form() {
        let (omega, lambda) = (1.1, 0.6);
        let m = Model::driven(omega, lambda).unwrap();
        let g = FirstOrderCoeffs { g0: re(0.4), g1: re(0.07), g2: re(0.02) };
        let rho = DensityMatrix::new(ComplexMatrix::from_rows([[re(0.3), c(-0.1, 0.3)], [c(-0.1, -0.3), re(0.7)]])).unwrap();
        let r = rho.matrix();
        let s = pauli_basis();
        let l2 = lambda * lambda;
        let mut expected = comm(&s.x, r).scale(C64::new(0.0, -0.5 * omega));
        expected.add_scaled(g.g0 * 2.0 * l2, &(&(&s.z * r) * &s.z));
        expected.add_scaled(-g.g0 * 2.0 * l2, r);
        expected.add_scaled(-I * g.g1 * l2 * omega, &comm(&s.x, r));
        expected.add_scaled(-g.g1 * l2 * omega, &(&(&s.z * r) * &s.y));
        expected.add_scaled(-g.g1 * l2 * omega, &(&(&s.y * r) * &s.z));
        assert!(first_order_rhs(&m, &g, r).approx_eq(&expected, 1e-14));
    }

    #[test]
    fn half_l_obar_gives_lindblad() {
        let m = Model::driven(0.8, 1.3).unwrap();
        let rho = DensityMatrix::new(ComplexMatrix::from_rows([[re(0.5), c(0.1, 0.3)], [c(0.1, -0.3), re(0.5)]])).unwrap();
        let a = obar_master_rhs(&m, &m.l().scale_real(0.5), rho.matrix());
        assert!(a.approx_eq(&lindblad_rhs(&m, rho.matrix()), 1e-14));
        assert!(obar_master_rhs(&m, &pauli_basis().y, rho.matrix()).trace().norm() < 1e-15);
    }

    #[test]
    fn exact_and_functional_zeroth_master_agree() {
        let m = Model::dissipative(1.0, 1.0).unwrap();
        let k = ou(10.0);
        let rho0 = DensityMatrix::from_pure(&ComplexVector::normalized_from(vec![I, re(1.0)]).unwrap()).unwrap();
        let a = propagate(&m, &MasterScheme::exact_dissipative(&m, &k).unwrap(), &rho0, 0.01, 300, 30).unwrap();
        let b = propagate(&m, &MasterScheme::functional_zeroth(&k).unwrap(), &rho0, 0.01, 300, 30).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(trace_distance(x.matrix(), y.matrix()).unwrap() < 1e-10);
        }
        assert!(MasterScheme::exact_dissipative(&Model::driven(1.0, 1.0).unwrap(), &k).is_err());
    }

    #[test]
    fn long_time_equals_time_dependent_after_memory_decays() {
        let m = Model::driven(1.0, 1.0).unwrap();
        let k = ou(20.0);
        let rho = DensityMatrix::new(ComplexMatrix::from_rows([[re(0.5), c(0.2, 0.1)], [c(0.2, -0.1), re(0.5)]])).unwrap();
        let a = step_first_order_master(&rho, &m, &k, 3.0, 0.01).unwrap();
        let b = step_first_order_longtime(&rho, &m, 20.0, 0.01).unwrap();
        assert!(a.matrix().approx_eq(b.matrix(), 1e-14));
    }

    #[test]
    fn functional_master_step_with_prescribed_obar() {
        let m = Model::dissipative(1.0, 1.0).unwrap();
        let rho = excited();
        let a = step_functional_zeroth_master(&rho, &m, |_| m.l().scale_real(0.5), 0.0, 0.01).unwrap();
        let b = step_lindblad(&rho, &m, 0.01).unwrap();
        assert!(a.matrix().approx_eq(b.matrix(), 1e-15));
    }

    #[test]
    fn qbm_equations() {
        let (model, p) = harmonic_oscillator(12, 1.0, 0.0).unwrap();
        let psi = ComplexVector::normalized_from((0..12).map(|k| if k < 3 { re(1.0) } else { re(0.0) }).collect()).unwrap();
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        // η = 0 reduces every variant to unitary motion.
        let zero = Frozen(FirstOrderCoeffs::default());
        for variant in [QbmVariant::Zeroth, QbmVariant::First, QbmVariant::CaldeiraLeggett { eta: 0.0, kt: 1.0 }] {
            let (next, flag) = step_qbm(&rho, &model, &p, variant, &zero, 0.0, 0.01).unwrap();
            let unitary = step_lindblad(&rho, &model.uncoupled(), 0.01).unwrap();
            assert!(next.matrix().approx_eq(unitary.matrix(), 1e-14));
            assert!(!flag);
        }
        // The first-order oscillator equation is the post-Markov equation with L = q.
        let g = FirstOrderCoeffs { g0: c(0.3, -0.2), g1: c(0.05, -0.04), g2: re(0.0) };
        let a = qbm_rhs(&model, &p, QbmVariant::First, &g, rho.matrix());
        // [H,q] = −ip holds away from the truncation edge, so compare a low block.
        let b = first_order_rhs(&model, &g, rho.matrix());
        for i in 0..8 {
            for j in 0..8 {
                assert!((a[(i, j)] - b[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_overflow_is_flagged() {
        let (model, p) = harmonic_oscillator(4, 1.0, 0.0).unwrap();
        let rho = DensityMatrix::from_pure(&ComplexVector::basis(4, 3)).unwrap();
        let (_, flag) = step_qbm(&rho, &model, &p, QbmVariant::Zeroth, &Frozen(FirstOrderCoeffs::default()), 0.0, 0.01).unwrap();
        assert!(flag);
        let series = propagate(&model, &MasterScheme::QbmZeroth(Arc::new(Frozen(FirstOrderCoeffs::default()))), &rho, 0.01, 2, 1).unwrap();
        assert!(series.untrusted);
    }

    #[test]
    fn rejects_bad_density_matrices() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(2)).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::from_rows([[re(0.5), re(0.1)], [re(0.2), re(0.5)]])).is_err());
    }

    #[test]
    fn time_dependence_flags() {
        assert!(!MasterScheme::Lindblad.is_time_dependent());
        assert!(MasterScheme::functional_zeroth(&ou(1.0)).unwrap().is_time_dependent());
        assert!(!MasterScheme::long_time(&ou(1.0)).unwrap().is_time_dependent());
    }
}
