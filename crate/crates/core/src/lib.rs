//! Group-orbit pooling of planar images.
//!
//! The crate averages an image over a compact box `G0` of a planar
//! transformation group (translations, rotations, rigid motions, shears) and
//! measures how that pooling contracts distances between transformed copies
//! and bounds the curvature of the pooled orbit. Every bound check is
//! reported with an explicit discretization budget.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod group;
pub mod haar;
pub mod image;
pub mod plot;
pub mod pooling;
pub mod rng;
pub mod signatures;

pub use error::{Error, Result};
