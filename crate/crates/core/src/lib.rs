//! Pseudo-spectral solver and verification harness for the mean-field
//! active-particle equation
//!
//! ∂ₜf + Pe·div_x((1−ρ)f·e(θ)) = Dₑ·Δₓf + ∂²_θ f,   ρ = ∫ f dθ,
//!
//! on the periodic box (0, 2π)³ of positions x and orientations θ.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
