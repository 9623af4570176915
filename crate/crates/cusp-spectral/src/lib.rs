//! Numerical spectral theory for degenerating cusped hyperbolic triangles.

// Index loops mirror the element formulas; `!(x > y)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod airy;
pub mod banded;
pub mod branches;
pub mod eigen;
pub mod error;
pub mod fit;
pub mod forms;
pub mod geometry;
pub mod model;
pub mod modespace;
pub mod ode;
pub mod par;
pub mod quad;

pub use error::{Error, Result};
