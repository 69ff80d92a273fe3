//! Vector-sequence store with drift-field scoring.
//!
//! Sequences of vectors live in [`store::Shard`]s that keep each record's
//! successor delta. [`index`] searches them exactly, [`field`] turns the
//! neighbors of a point into a local Gaussian drift field and scores
//! transitions against it, and [`triage`], [`calibrate`] and [`geometry`]
//! build on that. [`ballistics`] runs the projectile experiment.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ballistics;
pub mod calibrate;
pub mod cli;
pub mod error;
pub mod field;
pub mod geometry;
pub mod index;
pub mod store;
pub mod synth;
pub mod triage;

pub use error::{Error, Result};
