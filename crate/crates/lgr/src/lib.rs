//! Lagrangian fluid trajectories and learned graph-network surrogates.
//!
//! The crate covers a small end-to-end pipeline on periodic boxes:
//!
//! 1. [`sph`] — a weakly-compressible SPH solver (transport-velocity
//!    formulation) that generates Taylor-Green vortex and reverse Poiseuille
//!    flow trajectories.
//! 2. [`dataset`] — a compact binary trajectory format plus train/valid/test
//!    split manifests.
//! 3. [`features`] — radius graphs, velocity-history node features, noise
//!    injection and normalization for learned-simulator training, and real
//!    spherical-harmonic steerable attributes.
//! 4. [`gns`] — a graph network simulator (encoder / message-passing
//!    processor / decoder) with hand-rolled reverse-mode gradients and Adam.
//! 5. [`eval`] — autoregressive rollouts and metrics: position MSE, kinetic
//!    energy MSE, debiased entropic (Sinkhorn) divergence, CSV export and
//!    inference timing.
//!
//! Each major capability has a runnable example under `examples/`; the thin
//! `lgr` binary wires the same library calls into a scriptable CLI.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod geom;
pub mod gns;
pub mod neighbor;
pub mod sph;
pub mod state;

pub use geom::{PeriodicBox, Vec3};
pub use state::{Frame, Trajectory};
