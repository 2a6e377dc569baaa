//! Colored complex Gaussian noise and the shifted-noise memory.
//!
//! Complex Gaussians have independent real and imaginary parts carrying half
//! the variance each, so `M[|z|²] = α(0)` and `M[z²] = 0`.

use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{hermitian_eigen, psd_sqrt, ComplexMatrix, C64};

/// Random generator for trajectory `index` of an ensemble seeded by `master_seed`.
///
/// Each trajectory owns an independent ChaCha stream, so results do not
/// depend on how trajectories are scheduled.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn complex_gaussian<R: RngCore + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (0.5 * variance).sqrt();
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    C64::new(s * a, s * b)
}

/// Noise samples `z_0 … z_N` on the grid `t_k = k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub values: Vec<C64>,
}

impl NoisePath {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.dt)
    }
}

fn check_grid(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(invalid("dt", "must be positive and finite"))
    }
}

/// Exact grid sampling of stationary OU noise with `α(τ) = (γ/2)e^{−γ|τ|}`.
pub fn sample_ou_path_with<R: RngCore + ?Sized>(gamma: f64, dt: f64, n_steps: usize, rng: &mut R) -> Result<NoisePath> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid("gamma", "must be positive and finite"));
    }
    check_grid(dt)?;
    let decay = (-gamma * dt).exp();
    let innovation = 0.5 * gamma * (1.0 - decay * decay);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut z = complex_gaussian(rng, 0.5 * gamma);
    values.push(z);
    for _ in 0..n_steps {
        z = z * decay + complex_gaussian(rng, innovation);
        values.push(z);
    }
    Ok(NoisePath { dt, values })
}

pub fn sample_ou_path(gamma: f64, dt: f64, n_steps: usize, seed: u64) -> Result<NoisePath> {
    sample_ou_path_with(gamma, dt, n_steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Samples any stationary kernel on a grid through the square root of its
/// covariance matrix. Building the factor costs one eigen-decomposition;
/// every sample afterwards is a matrix-vector product.
#[derive(Clone, Debug)]
pub struct GaussianPathSampler {
    dt: f64,
    factor: ComplexMatrix,
}

impl GaussianPathSampler {
    pub fn new(kernel: &Kernel, dt: f64, n_steps: usize) -> Result<Self> {
        check_grid(dt)?;
        let n = n_steps + 1;
        let lags = (0..n).map(|k| kernel.correlation(k as f64 * dt)).collect::<Result<Vec<_>>>()?;
        let mut cov = ComplexMatrix::zeros(n);
        for j in 0..n {
            for k in 0..n {
                cov[(j, k)] = if j >= k { lags[j - k] } else { lags[k - j].conj() };
            }
        }
        let eigen = hermitian_eigen(&cov);
        let max = eigen.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eigen.values[0];
        if min < -1e-6 * max {
            return Err(Error::NotPositiveSemidefinite { min, max });
        }
        Ok(Self { dt, factor: psd_sqrt(&eigen) })
    }

    pub fn n_steps(&self) -> usize {
        self.factor.dim() - 1
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> NoisePath {
        let n = self.factor.dim();
        let xi: Vec<C64> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
        let values = (0..n).map(|j| (0..n).map(|k| self.factor[(j, k)] * xi[k]).sum()).collect();
        NoisePath { dt: self.dt, values }
    }
}

pub fn sample_general_path(kernel: &Kernel, dt: f64, n_steps: usize, seed: u64) -> Result<NoisePath> {
    let sampler = GaussianPathSampler::new(kernel, dt, n_steps)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

#[derive(Clone, Debug)]
enum Memory {
    Ou { gamma: f64 },
    /// `α*(k·dt)` for `k = 0, 1, …`
    General { lags: Arc<Vec<C64>> },
}

/// Running value of `∫₀ᵗ α(t,s)* ⟨L†⟩_s ds`, the shift between the noise and
/// the shifted noise of the norm-preserving equation.
#[derive(Clone, Debug)]
pub struct ShiftAccumulator {
    kind: Memory,
    dt: f64,
    memory: C64,
    history: Vec<C64>,
}

impl ShiftAccumulator {
    /// Accumulator for a trajectory of at most `n_steps` steps of size `dt`.
    pub fn new(kernel: &Kernel, dt: f64, n_steps: usize) -> Result<Self> {
        check_grid(dt)?;
        let kind = match kernel {
            Kernel::OrnsteinUhlenbeck { gamma } => Memory::Ou { gamma: *gamma },
            Kernel::Delta => {
                return Err(Error::Unsupported { what: "a shift memory", requirement: "a kernel with finite correlation time" })
            }
            _ => {
                let lags = (0..=n_steps).map(|k| kernel.correlation(k as f64 * dt).map(|a| a.conj())).collect::<Result<Vec<_>>>()?;
                Memory::General { lags: Arc::new(lags) }
            }
        };
        Ok(Self { kind, dt, memory: C64::new(0.0, 0.0), history: Vec::new() })
    }

    /// Convolution accumulator for an arbitrary kernel, even one with a closed recursion.
    pub fn general(kernel: &Kernel, dt: f64, n_steps: usize) -> Result<Self> {
        check_grid(dt)?;
        let lags = (0..=n_steps).map(|k| kernel.correlation(k as f64 * dt).map(|a| a.conj())).collect::<Result<Vec<_>>>()?;
        Ok(Self { kind: Memory::General { lags: Arc::new(lags) }, dt, memory: C64::new(0.0, 0.0), history: Vec::new() })
    }

    pub fn memory(&self) -> C64 {
        self.memory
    }

    pub fn shifted(&self, z: C64) -> C64 {
        z + self.memory
    }

    fn lag(lags: &[C64], k: usize) -> Result<C64> {
        lags.get(k).copied().ok_or(Error::LagOutOfRange { lag: k as f64, max: (lags.len() - 1) as f64 })
    }

    /// First-order update from `t` to `t + dt` using `⟨L†⟩_t` only. For the OU
    /// kernel this is `I ← e^{−γdt}(I + (γ/2)⟨L†⟩_t dt)`.
    pub fn update_shift(&mut self, ldag: C64) -> Result<()> {
        match &self.kind {
            Memory::Ou { gamma } => {
                self.memory = (self.memory + ldag * (0.5 * gamma * self.dt)) * (-gamma * self.dt).exp();
            }
            Memory::General { lags } => {
                self.history.push(ldag);
                let m = self.history.len();
                let mut sum = C64::new(0.0, 0.0);
                for (j, h) in self.history.iter().enumerate() {
                    sum += Self::lag(lags, m - j)? * h;
                }
                self.memory = sum * self.dt;
            }
        }
        Ok(())
    }

    /// Memory at `t + dt` by the trapezoid rule, given `⟨L†⟩` at both ends of
    /// the step, without modifying the accumulator.
    pub fn peek_trapezoid(&self, ldag_now: C64, ldag_next: C64) -> Result<C64> {
        match &self.kind {
            Memory::Ou { gamma } => {
                let decay = (-gamma * self.dt).exp();
                Ok(self.memory * decay + (ldag_now * decay + ldag_next) * (0.25 * gamma * self.dt))
            }
            Memory::General { lags } => {
                let m = self.history.len() + 1;
                let first = self.history.first().copied().unwrap_or(ldag_now);
                let mut sum = first * Self::lag(lags, m)? * 0.5;
                for j in 1..m {
                    let h = if j < self.history.len() { self.history[j] } else { ldag_now };
                    sum += Self::lag(lags, m - j)? * h;
                }
                sum += ldag_next * Self::lag(lags, 0)? * 0.5;
                Ok(sum * self.dt)
            }
        }
    }

    /// Second-order update from `t` to `t + dt`.
    pub fn advance_trapezoid(&mut self, ldag_now: C64, ldag_next: C64) -> Result<()> {
        self.memory = self.peek_trapezoid(ldag_now, ldag_next)?;
        if let Memory::General { .. } = self.kind {
            self.history.push(ldag_now);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::re;

    #[test]
    fn seeds_are_deterministic() {
        let a = sample_ou_path(3.0, 0.01, 100, 7).unwrap();
        let b = sample_ou_path(3.0, 0.01, 100, 7).unwrap();
        let c = sample_ou_path(3.0, 0.01, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut r1 = trajectory_rng(1, 5);
        let mut r2 = trajectory_rng(1, 5);
        let mut r3 = trajectory_rng(1, 6);
        let x = r1.next_u64();
        assert_eq!(x, r2.next_u64());
        assert_ne!(x, r3.next_u64());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(sample_ou_path(0.0, 0.1, 3, 1).is_err());
        assert!(sample_ou_path(1.0, -0.1, 3, 1).is_err());
        assert!(sample_general_path(&Kernel::Delta, 0.1, 3, 1).is_err());
    }

    #[test]
    fn rejects_non_psd_covariance() {
        let bad = Kernel::tabulated(alloc::vec![(0.0, re(1.0)), (0.1, re(1.0)), (0.2, re(-1.0))]).unwrap();
        assert!(matches!(GaussianPathSampler::new(&bad, 0.1, 2), Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn single_point_sampler_has_zero_lag_variance() {
        let k = Kernel::ornstein_uhlenbeck(4.0).unwrap();
        let sampler = GaussianPathSampler::new(&k, 0.1, 0).unwrap();
        assert!((sampler.factor[(0, 0)].re - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_source_keeps_memory_zero() {
        let k = Kernel::ornstein_uhlenbeck(2.0).unwrap();
        let mut acc = ShiftAccumulator::new(&k, 0.01, 10).unwrap();
        for _ in 0..10 {
            acc.update_shift(re(0.0)).unwrap();
        }
        assert_eq!(acc.memory(), re(0.0));
        assert_eq!(acc.shifted(re(0.3)), re(0.3));
    }

    #[test]
    fn constant_source_reaches_half() {
        let k = Kernel::ornstein_uhlenbeck(5.0).unwrap();
        let mut left = ShiftAccumulator::new(&k, 0.001, 0).unwrap();
        let mut trap = left.clone();
        let cst = C64::new(0.4, -0.2);
        for _ in 0..10_000 {
            left.update_shift(cst).unwrap();
            trap.advance_trapezoid(cst, cst).unwrap();
        }
        assert!((left.memory() - cst * 0.5).norm() < 2e-3);
        assert!((trap.memory() - cst * 0.5).norm() < 1e-6);
    }

    #[test]
    fn convolution_matches_ou_recursion() {
        let k = Kernel::ornstein_uhlenbeck(3.0).unwrap();
        let n = 200;
        let dt = 0.005;
        let mut ou = ShiftAccumulator::new(&k, dt, n).unwrap();
        let mut conv = ShiftAccumulator::general(&k, dt, n).unwrap();
        let mut ou_left = ou.clone();
        let mut conv_left = conv.clone();
        let source = |j: usize| C64::new((0.05 * j as f64).sin(), 0.3 * (0.02 * j as f64).cos());
        for j in 0..n {
            ou.advance_trapezoid(source(j), source(j + 1)).unwrap();
            conv.advance_trapezoid(source(j), source(j + 1)).unwrap();
            ou_left.update_shift(source(j)).unwrap();
            conv_left.update_shift(source(j)).unwrap();
            assert!((ou.memory() - conv.memory()).norm() < 1e-12);
            assert!((ou_left.memory() - conv_left.memory()).norm() < 1e-12);
        }
        assert!(conv.advance_trapezoid(re(0.0), re(0.0)).is_err());
    }
}
