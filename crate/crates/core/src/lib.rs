//! Extended Bose-Hubbard toolkit for vibrating 2D optical lattices.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod boson;
pub mod dynamics;
pub mod error;
pub mod manybody;
pub mod onsite;
pub mod par;
pub mod params;
pub mod protocols;
pub mod scan;
pub mod spline;
pub mod units;

pub use error::{Error, Result};
