//! Differentiable finite-difference spacecraft thermal model with a
//! trainable, load-driven nodalization layer.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches
//! files, threads or the command line lives in the `adaptherm` crate.
//!
//! Layout:
//! - [`mesh`]: spacecraft geometry, materials and per-face uniform meshes.
//! - [`radiation`]: Monte-Carlo view factors on the dense mesh and the
//!   nearest-node lookup for coarse meshes.
//! - [`resample`]: flux-preserving load downsampling and temperature
//!   interpolation between meshes.
//! - [`solver`]: explicit conduction/radiation time stepping.
//! - [`autodiff`]: vector-valued reverse-mode tape, plain evaluator and
//!   checkpointed rollouts.
//! - [`nnet`]: multilayer perceptrons and the Adam optimizer.
//! - [`piml`]: the hybrid models, losses and baselines.
//! - [`orbit`] and [`dataset`]: synthetic orbital loads and training data.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod dataset;
mod error;
pub mod geometry;
pub mod mesh;
pub mod nnet;
pub mod orbit;
pub mod piml;
pub mod radiation;
pub mod resample;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};

/// Stefan-Boltzmann constant, W/(m²·K⁴).
pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;

/// Nodes per dimension of the dense (high-fidelity) mesh.
pub const DENSE_N: usize = 10;
/// Smallest admissible nodes per dimension.
pub const MIN_N: usize = 2;
/// Largest admissible nodes per dimension.
pub const MAX_N: usize = 10;
