//! Stochastic simulation of predecoherence and collapse.
//!
//! The crate is organised around five layers:
//!
//! - [`denmat`]: small dense Hermitian algebra (validated density matrices,
//!   thermal states, distance and similarity functionals, signed spectral
//!   split, partial traces).
//! - [`collision`]: a single apparatus/molecule collision and its
//!   depletion/reconstruction deltas, eigenvector sensitivity, and sourced
//!   evolution of the fluctuating part `Ω(t) = ρ(t) − ρ_iso(t)`.
//! - [`transport`]: the intricacy front, both as a reaction-diffusion PDE
//!   and as a discrete duplication walk.
//! - [`collapse`]: Brownian motion of channel probabilities on the simplex
//!   with absorption, ensemble statistics, and exhaustive history trees.
//! - [`measurement`]: physical track parameters, fluctuation formulas, the
//!   collapse timescale, and named measurement scenarios.
//!
//! Monte Carlo fan-out goes through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and a plain loop otherwise. Per-trial seeds
//! are derived from the master seed by counter, so results do not depend on
//! the execution mode.

pub mod collapse;
pub mod collision;
pub mod denmat;
pub mod exec;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod transport;

pub use num_complex::Complex64;

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
