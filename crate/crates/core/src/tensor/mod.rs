//! Dense tensors, matrix product states and boundary-MPS contraction of
//! grid networks.
//!
//! Magnitudes are kept in log space wherever they can drift: MPS carry a
//! `log_scale`, and contraction values come back as [`LogScalar`].

mod dense;
mod grid;
mod linalg;
mod mps;
mod scalar;

pub use dense::{contract, Tensor};
pub(crate) use dense::increment;
pub use grid::{bmps_contract, bmps_sweep, GridTN, DOWN, LEFT, RIGHT, UP};
pub use linalg::{svd_truncate, SvdSplit, SVD_CUTOFF};
pub use mps::{mps_inner, Canonical, Mps};
pub use scalar::LogScalar;
