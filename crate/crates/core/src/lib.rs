//! Finite-element ground truth and a graph-network surrogate for 2D static
//! boundary value problems.
//!
//! The crate covers the full pipeline: mesh generation with augmentations
//! ([`mesh`]), P1 finite-element solvers for electrostatics, magnetostatics
//! and linear elasticity ([`fem`]), graph-encoded dataset generation with
//! split manifests ([`dataset`]), a reverse-mode autodiff engine with Adam
//! ([`autodiff`]), the encoder/processor/decoder spectral graph network
//! ([`gnn`]), and the training/evaluation/benchmark harness ([`trainer`]).
//!
//! Data-parallel inner loops (sample generation, batched evaluation, dense
//! kernels) run on rayon when the default `parallel` feature is enabled and
//! fall back to equivalent sequential loops otherwise. Results are bitwise
//! identical either way: parallel work is partitioned into fixed chunks and
//! reduced in a fixed order.

pub mod autodiff;
pub mod dataset;
pub mod fem;
pub mod gnn;
pub mod mesh;
pub(crate) mod parallel;
pub mod render;
pub mod rng;
pub mod sparse;
pub mod trainer;

pub use sparse::CsrMatrix;

/// Cap the global worker pool for data-parallel stages. Callable once,
/// before any parallel work. A no-op (always Ok) in sequential builds.
#[cfg(feature = "parallel")]
pub fn set_worker_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn set_worker_threads(_n: usize) -> Result<(), String> {
    Ok(())
}
