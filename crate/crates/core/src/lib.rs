//! Analysis of diverging CP components.
//!
//! The crate builds sequences of CP decompositions that converge to boundary
//! tensors of higher rank, brings boundary tensors to a simultaneous
//! upper-triangular (SGSD) form, and measures whether the diverging
//! components of each group become proportional.
//!
//! Modules, bottom-up:
//!
//! * [`tensor`] – dense 3-way arrays, multilinear products, unfoldings, ranks.
//! * [`cp`] – the CP decomposition value type and component metrics.
//! * [`als`] – alternating least squares with a per-sweep trace.
//! * [`sgsd`] – Jacobi-type SGSD, slicemix search, normalized cores and
//!   their joint eigenstructure.
//! * [`families`] – explicit diverging sequences and their limits.
//! * [`degeneracy`] – group detection and proportionality verdicts.
//! * [`sweep`] – n-grid sweeps over a family, with CSV/JSON export.

pub mod als;
pub mod cp;
pub mod degeneracy;
pub mod error;
pub mod families;
pub mod linalg;
pub mod sgsd;
pub mod sweep;
pub mod tensor;

pub use cp::{ComponentGroup, CpDecomposition, Representation};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use tensor::Tensor3;
