//! Ergodic coverage planning on arbitrary 2D meshed environments.
//!
//! The library plans collision-free search trajectories for point robots by
//! following measure-preserving flows built from Dirichlet Laplacian stream
//! functions, and minimizes a Laplace-Beltrami spectral ergodic metric over a
//! finite horizon with an SOCP-projected gradient loop.
//!
//! Modules mirror the pipeline: [`mesh`] (domains and densities), [`fem`]
//! (mass/stiffness matrices and eigenbases), [`flow`] (measure-preserving
//! velocity fields), [`sampler`] (random-flow trajectories), [`metric`]
//! (ergodicity and gradients), [`socp`] and [`optimizer`] (finite-horizon
//! minimization).

pub(crate) mod advect;
pub mod error;
pub mod fem;
pub mod flow;
pub mod geom;
pub mod mesh;
pub mod metric;
pub mod optimizer;
pub mod sampler;
pub mod socp;

pub use error::{Error, Result};
