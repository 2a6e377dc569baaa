//! The open-system problem: a Hamiltonian and a coupling operator.

use crate::error::{invalid, Error, Result};
use crate::linalg::{commutator, pauli_basis, ComplexMatrix};

/// Which of the standard two-level models a [`Model`] was built as.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    Custom,
    /// `H = (ω/2)σ_z`, `L = λσ_−`
    Dissipative { omega: f64, lambda: f64 },
    /// `H = (ω/2)σ_x`, `L = λσ_z`
    Driven { omega: f64, lambda: f64 },
}

/// System Hamiltonian `H` and coupling operator `L`, with the operator
/// products the equations of motion need precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    kind: ModelKind,
    h: ComplexMatrix,
    l: ComplexMatrix,
    l_dag: ComplexMatrix,
    /// L†L
    l_dag_l: ComplexMatrix,
    /// [H, L]
    h_l: ComplexMatrix,
    /// [L†, L]L
    lindblad_cubic: ComplexMatrix,
}

impl Model {
    pub fn new(h: ComplexMatrix, l: ComplexMatrix) -> Result<Self> {
        Self::with_kind(h, l, ModelKind::Custom)
    }

    fn with_kind(h: ComplexMatrix, l: ComplexMatrix, kind: ModelKind) -> Result<Self> {
        if h.dim() != l.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: l.dim() });
        }
        if !h.is_finite() || !l.is_finite() {
            return Err(invalid("operators", "must have finite entries"));
        }
        if !h.is_hermitian(1e-12) {
            return Err(invalid("H", "must be Hermitian"));
        }
        let l_dag = l.dagger();
        let l_dag_l = &l_dag * &l;
        let h_l = commutator(&h, &l)?;
        let lindblad_cubic = &commutator(&l_dag, &l)? * &l;
        Ok(Self { kind, h, l, l_dag, l_dag_l, h_l, lindblad_cubic })
    }

    pub fn dissipative(omega: f64, lambda: f64) -> Result<Self> {
        check_finite(omega, lambda)?;
        let s = pauli_basis();
        Self::with_kind(s.z.scale_real(0.5 * omega), s.minus.scale_real(lambda), ModelKind::Dissipative { omega, lambda })
    }

    pub fn driven(omega: f64, lambda: f64) -> Result<Self> {
        check_finite(omega, lambda)?;
        let s = pauli_basis();
        Self::with_kind(s.x.scale_real(0.5 * omega), s.z.scale_real(lambda), ModelKind::Driven { omega, lambda })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn l(&self) -> &ComplexMatrix {
        &self.l
    }

    pub fn l_dag(&self) -> &ComplexMatrix {
        &self.l_dag
    }

    pub fn l_dag_l(&self) -> &ComplexMatrix {
        &self.l_dag_l
    }

    /// `[H, L]`
    pub fn h_l(&self) -> &ComplexMatrix {
        &self.h_l
    }

    /// `[L†, L]L`
    pub fn lindblad_cubic(&self) -> &ComplexMatrix {
        &self.lindblad_cubic
    }

    /// Same model with the coupling switched off.
    pub fn uncoupled(&self) -> Self {
        Self::new(self.h.clone(), ComplexMatrix::zeros(self.dim())).expect("valid model")
    }
}

fn check_finite(omega: f64, lambda: f64) -> Result<()> {
    if omega.is_finite() && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid("omega/lambda", "must be finite"))
    }
}
