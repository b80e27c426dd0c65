//! Numerical toolkit for stochastic dynamics under volatility uncertainty.
//!
//! The crate is organised around a handful of modules:
//!
//! - [`grid`]: time grids on `[-tau, T]`, trajectories and delay segments.
//! - [`gheat`]: explicit finite differences for the G-heat equation
//!   `u_t = G(u_xx)` and the G-normal distribution derived from it.
//! - [`scenarios`]: G-Brownian motion sampled under adapted volatility
//!   scenarios, and the sublinear expectation as a max over a scenario family.
//! - [`functionals`]: the coefficient families `Q, b, gamma, sigma` and costs.
//! - [`nsfde`]: Euler-Maruyama for neutral functional SDEs driven by G-Brownian
//!   motion, the Picard operator and its weighted norm.
//! - [`control`]: strict and relaxed controls, chattering, worst-case costs and
//!   exhaustive optimisers.

pub mod control;
pub mod error;
pub mod functionals;
pub mod gheat;
pub mod grid;
pub mod nsfde;
pub mod rng;
pub mod scenarios;
pub mod stats;

pub use error::{Error, Result};
pub use gheat::VolBounds;
pub use grid::{Path, Segment, TimeGrid};
