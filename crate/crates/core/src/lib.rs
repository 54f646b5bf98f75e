//! Entropy production, Fisher information and bound certificates for
//! stochastic mechanical systems on Euclidean spaces, the circle, SE(2) and SO(3).

pub mod error;
pub mod grid;
pub mod lie;
pub mod mechanics;
pub mod bounds;
pub mod diffusion;
pub mod fpe;
pub mod sde;
pub mod cli;

pub use error::{Error, Result};
