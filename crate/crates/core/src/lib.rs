//! Predator–prey reaction–diffusion model with a predator exclusion zone and
//! strong-Allee prey kinetics.

pub mod asymptotics;
pub mod banded;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod growth;
pub mod quadrature;
pub mod radial;
pub mod radau;
pub mod steady;
pub mod sweep;

pub use error::{Error, Result};
