//! Bath correlation functions and the coefficient functions built from them.
//!
//! A kernel is stationary: `α(t, s)` depends on the lag `t − s` only and obeys
//! `α(s, t) = α(t, s)*`. The first-order coefficients are
//!
//! ```text
//! g0(t) = ∫₀ᵗ α(t,s) ds
//! g1(t) = ∫₀ᵗ α(t,s) (t − s) ds
//! g2(t) = ∫₀ᵗ ∫₀ˢ α(t,s) α(s,u) (t − s) du ds
//! ```
//!
//! and `g3 … g6` are the analogous second-order integrals.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{re, C64};
use crate::quadrature::{integrate, Estimate, GaussLegendre, Tolerance};

/// Ohmic spectral density with a sharp cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct OhmicBath {
    pub eta: f64,
    pub cutoff: f64,
    pub kt: f64,
}

impl OhmicBath {
    /// `coth(ω / 2kT)`, equal to one at zero temperature.
    fn coth(&self, omega: f64) -> f64 {
        if self.kt == 0.0 {
            1.0
        } else {
            1.0 / (omega / (2.0 * self.kt)).tanh()
        }
    }

    /// `ω·coth(ω / 2kT)`, finite at `ω = 0`.
    fn omega_coth(&self, omega: f64) -> f64 {
        if self.kt == 0.0 {
            omega
        } else {
            let x = omega / (2.0 * self.kt);
            if x.abs() < 1e-8 {
                2.0 * self.kt
            } else {
                omega / x.tanh()
            }
        }
    }

    /// Integrates `f(ω)` over `[0, Λ]` for an integrand oscillating at
    /// frequency `t`, refining until the panel-doubling check passes.
    fn omega_integral<F: FnMut(f64) -> C64>(&self, t: f64, mut f: F) -> Result<C64> {
        let gl = GaussLegendre::new(16);
        let mut panels = 4 + (self.cutoff * t / PI).ceil() as usize;
        for _ in 0..6 {
            let Estimate { value, error } = gl.composite_checked(&mut f, 0.0, self.cutoff, panels);
            let target = 1e-12 * (1.0 + value.norm());
            if error <= target {
                return Ok(value * (self.eta / PI));
            }
            panels *= 2;
        }
        let Estimate { value, error } = gl.composite_checked(&mut f, 0.0, self.cutoff, panels);
        if error <= 1e-9 * (1.0 + value.norm()) {
            Ok(value * (self.eta / PI))
        } else {
            Err(Error::QuadratureNonConvergence { estimate: error, tolerance: 1e-9 })
        }
    }

    fn correlation(&self, lag: f64) -> Result<C64> {
        self.omega_integral(lag.abs(), |w| C64::new(self.omega_coth(w) * (w * lag).cos(), -w * (w * lag).sin()))
    }

    fn g0(&self, t: f64) -> Result<C64> {
        self.omega_integral(t, |w| {
            let x = w * t;
            let half = (0.5 * x).sin();
            C64::new(self.coth(w) * x.sin(), -2.0 * half * half)
        })
    }

    fn g1(&self, t: f64) -> Result<C64> {
        self.omega_integral(t, |w| {
            let x = w * t;
            let (h1, h2) = if x.abs() < 1e-3 {
                let x2 = x * x;
                (x * (0.5 - x2 / 8.0 + x2 * x2 / 144.0), x2 * (1.0 / 3.0 - x2 / 30.0))
            } else {
                (x.sin() + (x.cos() - 1.0) / x, x.sin() / x - x.cos())
            };
            C64::new(self.coth(w) * t * h1, -t * h2)
        })
    }

    /// Spectral weight `J(ω)` with `α(τ) = ∫ J(ω) e^{−iωτ} dω` over `[−Λ, Λ]`.
    pub fn spectral_density(&self, omega: f64) -> f64 {
        if omega.abs() > self.cutoff {
            return 0.0;
        }
        let w = omega.abs();
        let sign = if omega >= 0.0 { 1.0 } else { -1.0 };
        let value = if self.kt == 0.0 { w * (1.0 + sign) } else { self.omega_coth(w) + sign * w };
        self.eta / (2.0 * PI) * value
    }
}

/// Correlation function sampled on increasing lags starting at zero and
/// linearly interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedKernel {
    lags: Vec<f64>,
    values: Vec<C64>,
    cumulative: Vec<C64>,
}

impl TabulatedKernel {
    pub fn new(points: Vec<(f64, C64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("table", "needs at least two points"));
        }
        if points[0].0 != 0.0 {
            return Err(invalid("table", "first lag must be zero"));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("table", "lags must increase strictly"));
        }
        if points.iter().any(|(l, v)| !(l.is_finite() && v.re.is_finite() && v.im.is_finite())) {
            return Err(invalid("table", "entries must be finite"));
        }
        if points[0].1.im.abs() > 1e-12 * points[0].1.norm().max(1.0) {
            return Err(invalid("table", "zero-lag value must be real"));
        }
        let (lags, values): (Vec<f64>, Vec<C64>) = points.into_iter().unzip();
        let mut cumulative = Vec::with_capacity(lags.len());
        cumulative.push(C64::new(0.0, 0.0));
        for k in 1..lags.len() {
            let piece = (values[k - 1] + values[k]) * (0.5 * (lags[k] - lags[k - 1]));
            cumulative.push(cumulative[k - 1] + piece);
        }
        Ok(Self { lags, values, cumulative })
    }

    pub fn max_lag(&self) -> f64 {
        *self.lags.last().expect("non-empty table")
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, C64)> + '_ {
        self.lags.iter().copied().zip(self.values.iter().copied())
    }

    fn segment(&self, lag: f64) -> Result<usize> {
        if lag < 0.0 || lag > self.max_lag() * (1.0 + 1e-12) {
            return Err(Error::LagOutOfRange { lag, max: self.max_lag() });
        }
        let k = self.lags.partition_point(|&l| l <= lag);
        Ok(k.clamp(1, self.lags.len() - 1) - 1)
    }

    fn value(&self, lag: f64) -> Result<C64> {
        let k = self.segment(lag)?;
        let w = (lag - self.lags[k]) / (self.lags[k + 1] - self.lags[k]);
        Ok(self.values[k] * (1.0 - w) + self.values[k + 1] * w)
    }

    fn integral_to(&self, t: f64) -> Result<C64> {
        let k = self.segment(t)?;
        let end = self.value(t)?;
        Ok(self.cumulative[k] + (self.values[k] + end) * (0.5 * (t - self.lags[k])))
    }
}

/// Bath correlation function.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `α(τ) = (γ/2) e^{−γ|τ|}`
    OrnsteinUhlenbeck { gamma: f64 },
    /// `α(τ) = δ(τ)`, the Markov limit.
    Delta,
    Ohmic(OhmicBath),
    Tabulated(Arc<TabulatedKernel>),
}

/// The first-order coefficients at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FirstOrderCoeffs {
    pub g0: C64,
    pub g1: C64,
    pub g2: C64,
}

/// The second-order coefficients at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SecondOrderCoeffs {
    pub g3: C64,
    pub g4: C64,
    pub g5: C64,
    pub g6: C64,
}

/// `1 − e^{−x} Σ_{j≤k} x^j / j!`, accurate for small `x`.
fn exp_tail(k: u32, x: f64) -> f64 {
    if x < 1.0 {
        let mut term = 1.0;
        for j in 1..=k {
            term *= x / j as f64;
        }
        let mut sum = 0.0;
        for j in (k + 1)..(k + 40) {
            term *= x / j as f64;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        (-x).exp() * sum
    } else {
        let mut term = 1.0;
        let mut partial = 1.0;
        for j in 1..=k {
            term *= x / j as f64;
            partial += term;
        }
        1.0 - (-x).exp() * partial
    }
}

fn lag_tolerance() -> Tolerance {
    Tolerance { abs: 1e-14, rel: 1e-12, max_intervals: 4000 }
}

impl Kernel {
    pub fn ornstein_uhlenbeck(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", "must be positive and finite"));
        }
        Ok(Self::OrnsteinUhlenbeck { gamma })
    }

    pub fn ohmic(eta: f64, cutoff: f64, kt: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(invalid("eta", "must be nonnegative and finite"));
        }
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(invalid("cutoff", "must be positive and finite"));
        }
        if !(kt.is_finite() && kt >= 0.0) {
            return Err(invalid("kT", "must be nonnegative and finite"));
        }
        Ok(Self::Ohmic(OhmicBath { eta, cutoff, kt }))
    }

    pub fn tabulated(points: Vec<(f64, C64)>) -> Result<Self> {
        Ok(Self::Tabulated(Arc::new(TabulatedKernel::new(points)?)))
    }

    /// Samples this kernel at lags `k·step`, `k = 0..=n`, as a tabulated kernel.
    pub fn to_tabulated(&self, step: f64, n: usize) -> Result<Self> {
        let points = (0..=n).map(|k| Ok((k as f64 * step, self.correlation(k as f64 * step)?))).collect::<Result<_>>()?;
        Self::tabulated(points)
    }

    /// `α(t, s)`.
    pub fn eval(&self, t: f64, s: f64) -> Result<C64> {
        if t < 0.0 || s < 0.0 {
            return Err(invalid("time", "must be nonnegative"));
        }
        self.correlation(t - s)
    }

    /// `α` as a function of the lag `t − s`; negative lags return the conjugate.
    pub fn correlation(&self, lag: f64) -> Result<C64> {
        let value = match self {
            Kernel::OrnsteinUhlenbeck { gamma } => re(0.5 * gamma * (-gamma * lag.abs()).exp()),
            Kernel::Delta => return Err(Error::DistributionalKernel),
            Kernel::Ohmic(bath) => bath.correlation(lag.abs())?,
            Kernel::Tabulated(table) => table.value(lag.abs())?,
        };
        Ok(if lag < 0.0 { value.conj() } else { value })
    }

    /// Spectral weight for kernels with a spectral representation.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(gamma * gamma / (2.0 * PI * (gamma * gamma + omega * omega))),
            Kernel::Ohmic(bath) => Ok(bath.spectral_density(omega)),
            _ => Err(Error::Unsupported { what: "spectral density", requirement: "an OU or Ohmic kernel" }),
        }
    }

    fn lag_integral<F: FnMut(f64) -> Result<C64>>(&self, mut f: F, a: f64, b: f64) -> Result<C64> {
        let mut failure = None;
        let mut guarded = |x: f64| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                C64::new(0.0, 0.0)
            }
        };
        let value = match self {
            Kernel::Tabulated(table) => {
                let mut cuts: Vec<f64> = alloc::vec![a];
                cuts.extend(table.lags.iter().copied().filter(|&l| l > a && l < b));
                cuts.push(b);
                let mut sum = C64::new(0.0, 0.0);
                for w in cuts.windows(2) {
                    sum += integrate(&mut guarded, w[0], w[1], lag_tolerance())?.value;
                }
                sum
            }
            _ => integrate(&mut guarded, a, b, lag_tolerance())?.value,
        };
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    pub fn g0(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(re(0.5 * exp_tail(0, gamma * t))),
            Kernel::Delta => Ok(re(0.5)),
            Kernel::Ohmic(bath) => bath.g0(t),
            Kernel::Tabulated(table) => table.integral_to(t),
        }
    }

    pub fn g1(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(re(exp_tail(1, gamma * t) / (2.0 * gamma))),
            Kernel::Delta => Ok(C64::new(0.0, 0.0)),
            Kernel::Ohmic(bath) => bath.g1(t),
            Kernel::Tabulated(_) => self.lag_integral(|tau| Ok(self.correlation(tau)? * tau), 0.0, t),
        }
    }

    pub fn g2(&self, t: f64) -> Result<C64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => Ok(re(exp_tail(2, gamma * t) / (4.0 * gamma))),
            Kernel::Delta => Ok(C64::new(0.0, 0.0)),
            _ => self.lag_integral(|tau| Ok(self.correlation(tau)? * tau * self.g0(t - tau)?), 0.0, t),
        }
    }

    pub fn first_order(&self, t: f64) -> Result<FirstOrderCoeffs> {
        Ok(FirstOrderCoeffs { g0: self.g0(t)?, g1: self.g1(t)?, g2: self.g2(t)? })
    }

    /// `g3 … g6` by nested quadrature.
    pub fn second_order(&self, t: f64) -> Result<SecondOrderCoeffs> {
        check_time(t)?;
        if matches!(self, Kernel::Delta) {
            return Err(Error::Unsupported { what: "second-order coefficients", requirement: "a kernel with a finite value at zero lag" });
        }
        if t == 0.0 {
            return Ok(SecondOrderCoeffs::default());
        }
        let alpha0 = self.correlation(0.0)?;
        let g3 = self.lag_integral(|tau| Ok(self.correlation(tau)? * (0.5 * tau * tau)), 0.0, t)?;
        let g4 = g3 * alpha0;
        let g5 = self.lag_integral(|tau| Ok(self.correlation(tau)? * (0.5 * tau * tau) * self.g0(t - tau)?), 0.0, t)?;
        // Innermost pair: ∫₀ˢ du α(s,u) ∫₀ᵘ dv α(s,v) = ∫₀ˢ α(w) [g0(s) − g0(w)] dw.
        let nested = |s: f64| -> Result<C64> {
            if s == 0.0 {
                return Ok(C64::new(0.0, 0.0));
            }
            let gs = self.g0(s)?;
            self.lag_integral(|w| Ok(self.correlation(w)? * (gs - self.g0(w)?)), 0.0, s)
        };
        let g6 = self.lag_integral(|tau| Ok(self.correlation(tau)? * tau * tau * nested(t - tau)?), 0.0, t)?;
        Ok(SecondOrderCoeffs { g3, g4, g5, g6 })
    }

    /// Constant first-order coefficients reached once `t` exceeds the memory time.
    pub fn asymptotic_first_order(&self) -> Result<FirstOrderCoeffs> {
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => {
                Ok(FirstOrderCoeffs { g0: re(0.5), g1: re(0.5 / gamma), g2: re(0.25 / gamma) })
            }
            Kernel::Delta => Ok(FirstOrderCoeffs { g0: re(0.5), ..Default::default() }),
            _ => Err(Error::Unsupported { what: "asymptotic coefficients", requirement: "an OU or delta kernel" }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::OrnsteinUhlenbeck { .. } => "ou",
            Kernel::Delta => "delta",
            Kernel::Ohmic(_) => "ohmic",
            Kernel::Tabulated(_) => "tabulated",
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(invalid("t", "must be nonnegative and finite"))
    }
}

/// Anything that yields coefficients at arbitrary times.
pub trait CoefficientSource: Send + Sync {
    fn first_order(&self, t: f64) -> Result<FirstOrderCoeffs>;

    fn second_order(&self, _t: f64) -> Result<SecondOrderCoeffs> {
        Err(Error::Unsupported { what: "this coefficient source", requirement: "second-order tables" })
    }
}

impl CoefficientSource for Kernel {
    fn first_order(&self, t: f64) -> Result<FirstOrderCoeffs> {
        Kernel::first_order(self, t)
    }

    fn second_order(&self, t: f64) -> Result<SecondOrderCoeffs> {
        Kernel::second_order(self, t)
    }
}

/// Time-independent coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frozen(pub FirstOrderCoeffs);

impl CoefficientSource for Frozen {
    fn first_order(&self, _t: f64) -> Result<FirstOrderCoeffs> {
        Ok(self.0)
    }
}

/// Coefficients precomputed on the grid `k·spacing`, falling back to direct
/// evaluation between grid points.
#[derive(Clone, Debug)]
pub struct CoeffTable {
    kernel: Kernel,
    spacing: f64,
    first: Vec<FirstOrderCoeffs>,
    second: Option<Vec<SecondOrderCoeffs>>,
}

impl CoeffTable {
    pub fn new(kernel: &Kernel, spacing: f64, n_points: usize, with_second_order: bool) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        let times = (0..n_points).map(|k| k as f64 * spacing);
        let first = times.clone().map(|t| kernel.first_order(t)).collect::<Result<Vec<_>>>()?;
        let second = if with_second_order {
            Some(times.map(|t| kernel.second_order(t)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(Self { kernel: kernel.clone(), spacing, first, second })
    }

    /// Table covering `[0, t_max]` on a half-step grid, as needed by RK4 stages.
    pub fn for_steps(kernel: &Kernel, dt: f64, n_steps: usize, with_second_order: bool) -> Result<Self> {
        Self::new(kernel, 0.5 * dt, 2 * n_steps + 1, with_second_order)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn grid_index(&self, t: f64) -> Option<usize> {
        let x = t / self.spacing;
        let k = x.round();
        if (x - k).abs() < 1e-9 && k >= 0.0 && (k as usize) < self.first.len() {
            Some(k as usize)
        } else {
            None
        }
    }
}

impl CoefficientSource for CoeffTable {
    fn first_order(&self, t: f64) -> Result<FirstOrderCoeffs> {
        match self.grid_index(t) {
            Some(k) => Ok(self.first[k]),
            None => self.kernel.first_order(t),
        }
    }

    fn second_order(&self, t: f64) -> Result<SecondOrderCoeffs> {
        match (self.grid_index(t), &self.second) {
            (Some(k), Some(table)) => Ok(table[k]),
            _ => self.kernel.second_order(t),
        }
    }
}

/// One row of the oscillator coefficient table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QbmCoefficients {
    pub t: f64,
    pub g0r: f64,
    pub g0i: f64,
    pub g1r: f64,
    pub g1i: f64,
}

/// Real and imaginary parts of `g0`, `g1` on a time grid for an Ohmic bath.
pub fn qbm_coeff_table(kernel: &Kernel, times: &[f64]) -> Result<Vec<QbmCoefficients>> {
    if !matches!(kernel, Kernel::Ohmic(_)) {
        return Err(Error::Unsupported { what: "the oscillator coefficient table", requirement: "an Ohmic kernel" });
    }
    times
        .iter()
        .map(|&t| {
            let g0 = kernel.g0(t)?;
            let g1 = kernel.g1(t)?;
            Ok(QbmCoefficients { t, g0r: g0.re, g0i: g0.im, g1r: g1.re, g1i: g1.im })
        })
        .collect()
}

/// Coefficient source for the oscillator master equations, reading `g0`, `g1`
/// from a uniform table and interpolating linearly between rows.
#[derive(Clone, Debug)]
pub struct QbmTable {
    spacing: f64,
    rows: Vec<QbmCoefficients>,
}

impl QbmTable {
    pub fn new(kernel: &Kernel, spacing: f64, n_points: usize) -> Result<Self> {
        if !(spacing > 0.0) || n_points < 2 {
            return Err(invalid("grid", "needs a positive spacing and at least two points"));
        }
        let times: Vec<f64> = (0..n_points).map(|k| k as f64 * spacing).collect();
        Ok(Self { spacing, rows: qbm_coeff_table(kernel, &times)? })
    }

    pub fn rows(&self) -> &[QbmCoefficients] {
        &self.rows
    }
}

impl CoefficientSource for QbmTable {
    fn first_order(&self, t: f64) -> Result<FirstOrderCoeffs> {
        let x = t / self.spacing;
        let last = self.rows.len() - 1;
        if !(x >= 0.0) || x > last as f64 + 1e-9 {
            return Err(Error::LagOutOfRange { lag: t, max: last as f64 * self.spacing });
        }
        let k = (x.floor() as usize).min(last - 1);
        let w = x - k as f64;
        let (a, b) = (self.rows[k], self.rows[k + 1]);
        let lerp = |p: f64, q: f64| p * (1.0 - w) + q * w;
        Ok(FirstOrderCoeffs {
            g0: C64::new(lerp(a.g0r, b.g0r), lerp(a.g0i, b.g0i)),
            g1: C64::new(lerp(a.g1r, b.g1r), lerp(a.g1i, b.g1i)),
            g2: C64::new(0.0, 0.0),
        })
    }
}

impl core::fmt::Display for Kernel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Kernel::OrnsteinUhlenbeck { gamma } => write!(f, "ou(gamma={gamma})"),
            Kernel::Delta => f.write_str("delta"),
            Kernel::Ohmic(b) => write!(f, "ohmic(eta={}, cutoff={}, kT={})", b.eta, b.cutoff, b.kt),
            Kernel::Tabulated(t) => write!(f, "tabulated({} points)", t.lags.len()),
        }
    }
}
