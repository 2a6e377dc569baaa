//! Noise-free approximations of the operator `Ō(t)` that replaces the
//! functional derivative in the trajectory equation.

use alloc::sync::Arc;
use core::fmt;

use crate::error::{Error, Result};
use crate::integrate::rk4_step;
use crate::kernels::{CoefficientSource, FirstOrderCoeffs, Kernel, SecondOrderCoeffs};
use crate::linalg::{commutator, pauli_basis, ComplexMatrix, C64, I};
use crate::model::{Model, ModelKind};

/// `Ō = g0 L − i g1 [H,L] − g2 [L†,L]L`
pub fn obar_first_order(model: &Model, g: &FirstOrderCoeffs) -> ComplexMatrix {
    let mut out = model.l().scale(g.g0);
    out.add_scaled(-I * g.g1, model.h_l());
    out.add_scaled(-g.g2, model.lindblad_cubic());
    out
}

/// Second-order expansion of `Ō`, adding the `g3 … g6` terms to the first-order operator.
pub fn obar_second_order(model: &Model, g: &FirstOrderCoeffs, h: &SecondOrderCoeffs) -> ComplexMatrix {
    let comm = |a: &ComplexMatrix, b: &ComplexMatrix| commutator(a, b).expect("model operators share a dimension");
    let hl = model.h_l();
    let cubic = model.lindblad_cubic();
    let ldl = model.l_dag_l();
    let mut out = obar_first_order(model, g);
    out.add_scaled(-h.g3, &comm(model.h(), hl));
    out.add_scaled(-h.g4, cubic);
    let mut g5_term = comm(model.h(), cubic);
    g5_term += &comm(&(model.l_dag() * hl), model.l());
    g5_term += &comm(ldl, hl);
    out.add_scaled(I * h.g5, &g5_term);
    let mut g6_term = comm(&(model.l_dag() * cubic), model.l());
    g6_term += &comm(ldl, cubic);
    out.add_scaled(h.g6, &g6_term);
    out
}

/// Right-hand side of the zeroth-order functional equation for the OU kernel,
/// `dŌ/dt = (γ/2)L − γŌ − i[H,Ō] − [L†Ō, Ō]`.
pub fn functional_zeroth_rhs(model: &Model, gamma: f64, obar: &ComplexMatrix) -> ComplexMatrix {
    let mut out = model.l().scale_real(0.5 * gamma);
    out.add_scaled(C64::new(-gamma, 0.0), obar);
    out.add_scaled(-I, &commutator(model.h(), obar).expect("same dimension"));
    out.add_scaled(C64::new(-1.0, 0.0), &commutator(&(model.l_dag() * obar), obar).expect("same dimension"));
    out
}

/// Right-hand side of `dF/dt = λγ/2 + (iω − γ)F + λF²`, whose solution
/// gives the exact `Ō = F σ_−` of the dissipative model with OU noise.
pub fn riccati_rhs(omega: f64, lambda: f64, gamma: f64, f: C64) -> C64 {
    C64::new(0.5 * lambda * gamma, 0.0) + C64::new(-gamma, omega) * f + f * f * lambda
}

/// A rule for producing `Ō(t)` along a trajectory or a propagator run.
#[derive(Clone)]
pub enum ObarScheme {
    FirstOrder(Arc<dyn CoefficientSource>),
    SecondOrder(Arc<dyn CoefficientSource>),
    /// `Ō₀(t)` co-evolved with its own ODE.
    FunctionalZeroth { gamma: f64, obar: ComplexMatrix },
    /// `F(t)` of the exact dissipative solution.
    ExactDissipative { gamma: f64, omega: f64, lambda: f64, f: C64 },
}

impl fmt::Debug for ObarScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObarScheme::FirstOrder(_) => f.write_str("FirstOrder"),
            ObarScheme::SecondOrder(_) => f.write_str("SecondOrder"),
            ObarScheme::FunctionalZeroth { gamma, obar } => {
                f.debug_struct("FunctionalZeroth").field("gamma", gamma).field("obar", obar).finish()
            }
            ObarScheme::ExactDissipative { gamma, omega, lambda, f: value } => f
                .debug_struct("ExactDissipative")
                .field("gamma", gamma)
                .field("omega", omega)
                .field("lambda", lambda)
                .field("f", value)
                .finish(),
        }
    }
}

fn ou_gamma(kernel: &Kernel, what: &'static str) -> Result<f64> {
    match kernel {
        Kernel::OrnsteinUhlenbeck { gamma } => Ok(*gamma),
        _ => Err(Error::Unsupported { what, requirement: "an OU kernel" }),
    }
}

impl ObarScheme {
    pub fn first_order<S: CoefficientSource + 'static>(source: S) -> Self {
        Self::FirstOrder(Arc::new(source))
    }

    pub fn second_order<S: CoefficientSource + 'static>(source: S) -> Self {
        Self::SecondOrder(Arc::new(source))
    }

    pub fn functional_zeroth(model: &Model, kernel: &Kernel) -> Result<Self> {
        let gamma = ou_gamma(kernel, "the functional zeroth-order scheme")?;
        Ok(Self::FunctionalZeroth { gamma, obar: ComplexMatrix::zeros(model.dim()) })
    }

    pub fn exact_dissipative(model: &Model, kernel: &Kernel) -> Result<Self> {
        let gamma = ou_gamma(kernel, "the exact dissipative scheme")?;
        match model.kind() {
            ModelKind::Dissipative { omega, lambda } => {
                Ok(Self::ExactDissipative { gamma, omega, lambda, f: C64::new(0.0, 0.0) })
            }
            _ => Err(Error::Unsupported { what: "the exact dissipative scheme", requirement: "the dissipative two-level model" }),
        }
    }

    /// `Ō` at time `t`. Co-evolved schemes return their current state and
    /// ignore `t`.
    pub fn value(&self, model: &Model, t: f64) -> Result<ComplexMatrix> {
        match self {
            ObarScheme::FirstOrder(src) => Ok(obar_first_order(model, &src.first_order(t)?)),
            ObarScheme::SecondOrder(src) => Ok(obar_second_order(model, &src.first_order(t)?, &src.second_order(t)?)),
            ObarScheme::FunctionalZeroth { obar, .. } => Ok(obar.clone()),
            ObarScheme::ExactDissipative { f, .. } => Ok(pauli_basis().minus.scale(*f)),
        }
    }

    /// Advances co-evolved state by one RK4 step; a no-op for the explicit expansions.
    pub fn advance(&mut self, model: &Model, dt: f64) -> Result<()> {
        match self {
            ObarScheme::FunctionalZeroth { gamma, obar } => {
                let g = *gamma;
                *obar = rk4_step(obar, 0.0, dt, |_, o| Ok::<_, Error>(functional_zeroth_rhs(model, g, o)))?;
            }
            ObarScheme::ExactDissipative { gamma, omega, lambda, f } => {
                let (g, w, l) = (*gamma, *omega, *lambda);
                *f = rk4_step(f, 0.0, dt, |_, x| Ok::<_, Error>(riccati_rhs(w, l, g, *x)))?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_co_evolved(&self) -> bool {
        matches!(self, ObarScheme::FunctionalZeroth { .. } | ObarScheme::ExactDissipative { .. })
    }
}

/// One RK4 step of the zeroth-order functional scheme.
pub fn step_functional_zeroth(scheme: &mut ObarScheme, model: &Model, dt: f64) -> Result<()> {
    match scheme {
        ObarScheme::FunctionalZeroth { .. } => scheme.advance(model, dt),
        _ => Err(Error::Unsupported { what: "step_functional_zeroth", requirement: "a functional zeroth-order scheme" }),
    }
}

/// One RK4 step of the exact dissipative scheme.
pub fn step_exact_dissipative(scheme: &mut ObarScheme, model: &Model, dt: f64) -> Result<()> {
    match scheme {
        ObarScheme::ExactDissipative { .. } => scheme.advance(model, dt),
        _ => Err(Error::Unsupported { what: "step_exact_dissipative", requirement: "an exact dissipative scheme" }),
    }
}
