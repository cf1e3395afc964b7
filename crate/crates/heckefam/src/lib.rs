//! Hecke character families over number fields, their exponential sums and
//! the summation identities used to study non-vanishing of L-values.

pub mod archgamma;
pub mod charlattice;
pub mod error;
pub mod expsums;
pub mod heckefamily;
pub mod numberfield;
pub mod quad;
pub mod sadic;
pub mod special;
pub mod voronoi;

pub use error::{Error, Result};
