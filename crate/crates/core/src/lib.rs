//! Pseudo-spectral laboratory for fractional Navier-Stokes self-similar
//! profiles: periodic-grid Fourier machinery, Littlewood-Paley analysis,
//! fractional heat semigroups, profile solvers and verification probes.

pub mod dilation;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod lab;
pub mod lp;
pub mod picard;
pub mod quadrature;
pub mod report;
pub mod semigroup;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Rank, SpectralField};
pub use grid::{make_grid, Grid};
