//! Upwind finite-volume discretizations of the continuity equation on
//! generalized and periodic meshes, with discrete log-scale semi-norms,
//! virtual coordinates and a coupled Poisson system.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod discretize;
pub mod error;
pub mod fields;
pub mod geom;
pub mod mesh_core;
pub mod seminorm;
pub mod spatial;
pub mod upwind;
pub mod vcoords;

pub use error::{Error, Result};

/// Library version, embedded in experiment summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
