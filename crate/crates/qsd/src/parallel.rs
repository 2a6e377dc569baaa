//! Multi-threaded ensembles.
//!
//! Work is split into the same fixed chunks the serial runner uses and the
//! partial sums are merged in chunk order, so the thread count never changes
//! the result.

use rayon::prelude::*;

use qsd_core::ensemble::{chunks, run_ensemble_range, EnsembleAccumulator};
use qsd_core::linalg::ComplexMatrix;
use qsd_core::qsd::TrajectoryConfig;

/// Builds a pool with `threads` workers; zero picks rayon's default.
pub fn pool(threads: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Runs `n_traj` trajectories on `pool`.
pub fn run_ensemble_parallel(
    pool: &rayon::ThreadPool,
    cfg: &TrajectoryConfig,
    observables: &[ComplexMatrix],
    n_traj: u64,
    master_seed: u64,
) -> anyhow::Result<EnsembleAccumulator> {
    anyhow::ensure!(n_traj > 0, "n_traj must be at least 1");
    let ranges: Vec<_> = chunks(n_traj).collect();
    let parts: Vec<_> = pool.install(|| ranges.into_par_iter().map(|r| run_ensemble_range(cfg, observables, master_seed, r)).collect());
    let mut acc = EnsembleAccumulator::new(cfg.output_times(), observables.to_vec(), cfg.model.dim())?;
    for part in parts {
        acc.merge(&part?)?;
    }
    acc.ensure_success_rate()?;
    Ok(acc)
}
