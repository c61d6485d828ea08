//! Regular-polygon equilibria of the curved n-body problem on the unit sphere
//! and the stability of the relative equilibria they generate.

pub mod dynamics;
pub mod error;
pub mod families;
pub mod geometry;
pub mod linalg;
pub mod potential;
pub mod reduction;
pub mod spectra;

pub use error::{Error, Result};
