//! Sector-resolved Liouvillian analysis of a saturable single-mode laser.
//!
//! The generator commutes with the U(1) phase superoperator, so it splits
//! into tridiagonal blocks labelled by `k`, each coupling `|m⟩⟨m−k|` to its
//! neighbours. Spectra, steady states and dynamics are computed per block;
//! dense operators are built only at oracle scale.

// `!(x > y)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod liouvillian;
pub mod model;
pub mod phase_space;
pub mod spectra;
pub mod steady_state;
pub mod trajectories;

pub use error::{Error, Result};
pub use model::ModelParams;
