//! Non-Markovian quantum state diffusion in the small-correlation-time
//! expansion: colored-noise trajectories, the matching master equations,
//! Markov limits and a brute-force system-plus-bath oracle.
//!
//! The crate is `no_std` and needs only `alloc`.
#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod ensemble;
pub mod error;
pub mod integrate;
pub mod kernels;
pub mod linalg;
pub mod master;
pub mod model;
pub mod noise;
pub mod obar;
pub mod oracle;
pub mod qsd;
pub mod quadrature;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ComplexVector, C64};
