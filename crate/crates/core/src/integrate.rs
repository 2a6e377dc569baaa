//! Fixed-step Runge-Kutta and Heun steppers over any linear state space.

use crate::linalg::{re, ComplexMatrix, ComplexVector, C64};

/// A state that can be combined linearly, `self += factor * other`.
pub trait Axpy: Clone {
    fn axpy(&mut self, factor: f64, other: &Self);
}

impl Axpy for ComplexMatrix {
    fn axpy(&mut self, factor: f64, other: &Self) {
        self.add_scaled(re(factor), other);
    }
}

impl Axpy for ComplexVector {
    fn axpy(&mut self, factor: f64, other: &Self) {
        self.add_scaled(re(factor), other);
    }
}

impl Axpy for C64 {
    fn axpy(&mut self, factor: f64, other: &Self) {
        *self += other * factor;
    }
}

impl Axpy for f64 {
    fn axpy(&mut self, factor: f64, other: &Self) {
        *self += factor * other;
    }
}

impl<A: Axpy, B: Axpy> Axpy for (A, B) {
    fn axpy(&mut self, factor: f64, other: &Self) {
        self.0.axpy(factor, &other.0);
        self.1.axpy(factor, &other.1);
    }
}

fn shifted<S: Axpy>(y: &S, h: f64, k: &S) -> S {
    let mut out = y.clone();
    out.axpy(h, k);
    out
}

/// One classical fourth-order Runge-Kutta step of `y' = f(t, y)`.
pub fn rk4_step<S, F, E>(y: &S, t: f64, h: f64, mut f: F) -> Result<S, E>
where
    S: Axpy,
    F: FnMut(f64, &S) -> Result<S, E>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &shifted(y, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &shifted(y, 0.5 * h, &k2))?;
    let k4 = f(t + h, &shifted(y, h, &k3))?;
    let mut out = y.clone();
    out.axpy(h / 6.0, &k1);
    out.axpy(h / 3.0, &k2);
    out.axpy(h / 3.0, &k3);
    out.axpy(h / 6.0, &k4);
    Ok(out)
}

/// One Heun (explicit trapezoid) step of `y' = f(t, y)`.
pub fn heun_step<S, F, E>(y: &S, t: f64, h: f64, mut f: F) -> Result<S, E>
where
    S: Axpy,
    F: FnMut(f64, &S) -> Result<S, E>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + h, &shifted(y, h, &k1))?;
    let mut out = y.clone();
    out.axpy(0.5 * h, &k1);
    out.axpy(0.5 * h, &k2);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::convert::Infallible;
    #[allow(unused_imports)]
    use num_traits::Float;

    fn endpoint_error(h: f64, rk4: bool) -> f64 {
        // y' = -2 t y, y(0) = 1, exact exp(-t^2).
        let f = |t: f64, y: &f64| -> Result<f64, Infallible> { Ok(-2.0 * t * y) };
        let n = (1.0 / h).round() as usize;
        let mut y = 1.0;
        for k in 0..n {
            let t = k as f64 * h;
            y = if rk4 { rk4_step(&y, t, h, f).unwrap() } else { heun_step(&y, t, h, f).unwrap() };
        }
        (y - (-1.0f64).exp()).abs()
    }

    #[test]
    fn convergence_orders() {
        let heun = endpoint_error(0.01, false) / endpoint_error(0.005, false);
        assert!((heun.log2() - 2.0).abs() < 0.1, "heun order {}", heun.log2());
        let rk4 = endpoint_error(0.05, true) / endpoint_error(0.025, true);
        assert!((rk4.log2() - 4.0).abs() < 0.15, "rk4 order {}", rk4.log2());
    }
}
