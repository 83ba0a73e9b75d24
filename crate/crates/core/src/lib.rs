//! Timeline model, geometry, and frame sequencer for text-driven map
//! animation.
//!
//! Everything in this crate is pure: values in, values out, no I/O.

pub mod canonical;
pub mod geometry;
pub mod ids;
pub mod model;
pub mod sequencer;
pub mod validators;

pub use model::*;
