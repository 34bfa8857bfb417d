//! Numerical isometric-dilation toolkit for commuting contraction tuples on
//! the polydisc.
//!
//! The pipeline takes an n-tuple of commuting contractions on a
//! finite-dimensional space, checks the positivity conditions that make an
//! isometric dilation possible, builds the dilation explicitly on a truncated
//! vector-valued Hardy space, extends it to a commuting family with a unitary
//! in the first slot via a finite-window regular-dilation model, and verifies
//! every claimed operator identity numerically, including a von Neumann-type
//! polynomial bound.

pub mod config;
pub mod error;
pub mod linalg;
pub mod par;

pub mod bcl;
pub mod corpus;
pub mod hardy;
pub mod json;
pub mod predil;
pub mod tuple;
pub mod verify;
pub mod window;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use linalg::CMatrix;
