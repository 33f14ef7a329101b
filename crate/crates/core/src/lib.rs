//! Ricci iteration on model Kähler curves.

pub mod elliptic;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod iteration;
pub mod kahler;
pub mod oracles;

pub use error::{Error, Result};
pub use geometry::{Backend, Field, GridTag, ModeId, SpectralCoeffs};
