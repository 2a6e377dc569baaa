//! Monte Carlo checks of the noise generators against their target
//! correlations.

use qsd_core::kernels::Kernel;
use qsd_core::noise::{sample_ou_path_with, trajectory_rng, GaussianPathSampler, NoisePath};
use qsd_core::C64;

/// Mean and standard error of a real sample.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn z_score(xs: &[f64], target: f64) -> f64 {
    let (m, se) = mean_se(xs);
    if se == 0.0 {
        return if m == target { 0.0 } else { f64::INFINITY };
    }
    (m - target).abs() / se
}

fn ou_paths(gamma: f64, dt: f64, n_steps: usize, n_paths: u64, seed: u64) -> Vec<NoisePath> {
    (0..n_paths).map(|p| sample_ou_path_with(gamma, dt, n_steps, &mut trajectory_rng(seed, p)).unwrap()).collect()
}

/// Real and imaginary parts of `z_j z_k*` and `z_j z_k` across paths.
fn products(paths: &[NoisePath], j: usize, k: usize) -> [Vec<f64>; 4] {
    let mut out: [Vec<f64>; 4] = Default::default();
    for p in paths {
        let (a, b) = (p.values[j], p.values[k]);
        let cov = a * b.conj();
        let pseudo = a * b;
        out[0].push(cov.re);
        out[1].push(cov.im);
        out[2].push(pseudo.re);
        out[3].push(pseudo.im);
    }
    out
}

#[test]
fn ou_quadrature_variance_is_gamma_over_four() {
    let paths = ou_paths(4.0, 0.05, 10, 100_000, 11);
    for k in [0, 10] {
        let re_sq: Vec<f64> = paths.iter().map(|p| p.values[k].re.powi(2)).collect();
        let im_sq: Vec<f64> = paths.iter().map(|p| p.values[k].im.powi(2)).collect();
        assert!(z_score(&re_sq, 1.0) < 3.0);
        assert!(z_score(&im_sq, 1.0) < 3.0);
        let pseudo: Vec<f64> = paths.iter().map(|p| (p.values[k] * p.values[k]).re).collect();
        assert!(z_score(&pseudo, 0.0) < 3.0);
    }
}

#[test]
fn ou_covariance_at_random_grid_pairs() {
    let (gamma, dt, n) = (2.0, 0.05, 50);
    let paths = ou_paths(gamma, dt, n, 20_000, 5);
    let mut rng = trajectory_rng(1234, 0);
    for _ in 0..20 {
        let j = (rand_index(&mut rng) % (n as u64 + 1)) as usize;
        let k = (rand_index(&mut rng) % (n as u64 + 1)) as usize;
        let target = 0.5 * gamma * (-gamma * (j as f64 - k as f64).abs() * dt).exp();
        let [cov_re, cov_im, ps_re, ps_im] = products(&paths, j, k);
        assert!(z_score(&cov_re, target) < 4.0, "({j},{k})");
        assert!(z_score(&cov_im, 0.0) < 4.0);
        assert!(z_score(&ps_re, 0.0) < 4.0);
        assert!(z_score(&ps_im, 0.0) < 4.0);
    }
}

fn rand_index(rng: &mut impl rand_chacha::rand_core::RngCore) -> u64 {
    rng.next_u64()
}

#[test]
fn short_memory_decorrelates_neighbours() {
    let paths = ou_paths(1000.0, 0.1, 1, 20_000, 8);
    let [cov_re, ..] = products(&paths, 1, 0);
    let (m, se) = mean_se(&cov_re);
    assert!(m.abs() < 4.0 * se);
    assert!(se < 0.5 * 1000.0 * 0.05);
}

#[test]
fn quadratures_are_gaussian() {
    let paths = ou_paths(2.0, 0.1, 3, 50_000, 21);
    for part in [|z: C64| z.re, |z: C64| z.im] {
        let xs: Vec<f64> = paths.iter().map(|p| part(p.values[3])).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let kurtosis = m4 / (m2 * m2);
        assert!((kurtosis - 3.0).abs() < 4.0 * (24.0 / n).sqrt(), "{kurtosis}");
    }
}

fn sampled_paths(kernel: &Kernel, dt: f64, n: usize, n_paths: u64, seed: u64) -> Vec<NoisePath> {
    let sampler = GaussianPathSampler::new(kernel, dt, n).unwrap();
    (0..n_paths).map(|p| sampler.sample(&mut trajectory_rng(seed, p))).collect()
}

fn assert_same_statistics(a: &[NoisePath], b: &[NoisePath], pairs: &[(usize, usize)]) {
    for &(j, k) in pairs {
        let pa = products(a, j, k);
        let pb = products(b, j, k);
        for (x, y) in pa.iter().zip(&pb) {
            let (mx, sx) = mean_se(x);
            let (my, sy) = mean_se(y);
            assert!((mx - my).abs() <= 4.0 * (sx * sx + sy * sy).sqrt(), "({j},{k}): {mx} vs {my}");
        }
    }
}

#[test]
fn generic_sampler_matches_ou_recursion() {
    let (gamma, dt, n) = (3.0, 0.1, 12);
    let kernel = Kernel::ornstein_uhlenbeck(gamma).unwrap();
    let generic = sampled_paths(&kernel, dt, n, 20_000, 3);
    let recursive = ou_paths(gamma, dt, n, 20_000, 4);
    assert_same_statistics(&generic, &recursive, &[(0, 0), (5, 5), (6, 3), (12, 0), (7, 9)]);
}

#[test]
fn tabulated_round_trip_keeps_statistics() {
    let (gamma, dt, n) = (3.0, 0.1, 12);
    let kernel = Kernel::ornstein_uhlenbeck(gamma).unwrap();
    let table = kernel.to_tabulated(dt, n).unwrap();
    let direct = sampled_paths(&kernel, dt, n, 20_000, 6);
    let via_table = sampled_paths(&table, dt, n, 20_000, 7);
    assert_same_statistics(&direct, &via_table, &[(0, 0), (4, 1), (12, 12), (11, 2)]);
}

#[test]
fn ohmic_sampler_reproduces_complex_correlation() {
    let kernel = Kernel::ohmic(0.1, 20.0, 1.0).unwrap();
    let dt = 0.02;
    let paths = sampled_paths(&kernel, dt, 8, 20_000, 9);
    for (j, k) in [(0, 0), (3, 0), (8, 2)] {
        let target = kernel.eval(j as f64 * dt, k as f64 * dt).unwrap();
        let [cov_re, cov_im, ps_re, _] = products(&paths, j, k);
        assert!(z_score(&cov_re, target.re) < 4.0);
        assert!(z_score(&cov_im, target.im) < 4.0);
        assert!(z_score(&ps_re, 0.0) < 4.0);
    }
}
