//! Omnidirectional slicing of 3D volumes into spherical view graphs, with
//! small graph and MLP heads trained on per-slice features.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod nrrd;
pub mod slicer;
pub mod sphere;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
