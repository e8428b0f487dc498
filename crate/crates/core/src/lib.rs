//! Run-and-tumble bacterial chemotaxis across three model levels.
//!
//! The crate implements, on a periodic 1D domain with a discrete velocity set:
//!
//! * [`agents`] — a stochastic cell-based simulator where every cell carries a
//!   position, a velocity and an intracellular methylation level `m` that
//!   relaxes toward the local equilibrium `M(x,t)` set by the ligand field;
//!   tumbles are a state-dependent Poisson process.
//! * [`solver_full`] — a finite-volume solver for the kinetic-transport
//!   equation of the density `q(x, v, y, t)` in the blow-up internal
//!   coordinate `y = (m - M)/epsilon`, with stiff adaptation drift, optional
//!   methylation noise (diffusion in `y`) and tumbling exchange.
//! * [`solver_limit`] — a finite-volume solver for the limiting kinetic
//!   equation of `pbar(x, v, t)` whose tumbling rate depends on the path-wise
//!   signal derivative `D_t M = dM/dt + v dM/dx` through a bulk kernel
//!   `T(D_t M)`, either the sharp evaluation `Lambda(-D_tM/G(0))` or its
//!   Gaussian average when methylation noise is retained.
//!
//! [`signal`] provides the prescribed ligand field and `M`, [`pathway`] the
//! intracellular rate functions and the bulk kernels, [`diagnostics`] the
//! moments, distances and phase-shift measurements used to compare the three
//! levels, and [`config`]/[`runner`] the file formats and orchestration used
//! by the command line interface.
//!
//! Units: lengths in micrometers, times in seconds, concentrations in
//! micromolar. Methylation, activity and the blow-up coordinate are
//! dimensionless.

pub mod agents;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod output;
pub mod pathway;
pub mod quadrature;
pub mod runner;
pub mod signal;
pub mod solver_full;
pub mod solver_limit;

pub use error::{Error, Result};
