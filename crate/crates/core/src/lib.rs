//! Lubrication and thin-film limits of a viscous fluid coupled to a thin
//! elastic plate, with tools to measure how fast the reduced models converge.

pub mod channel;
pub mod error;
pub mod experiment;
pub mod fsi;
pub mod profile;
pub mod reconstruction;
pub mod scaling;
pub mod spectral;
pub mod thinfilm;
pub mod verify;
pub mod vertical;

pub use error::{Error, Result};
