//! Generation of relaxed adsorbate–slab geometries with a periodic
//! Brownian-bridge model, plus evaluation, outlier triage and a desk-scale
//! screening harness driven by a surrogate relaxation oracle.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::op_ref
)]

pub mod bridge;
pub mod cli;
pub mod elements;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod outlier;
pub mod par;
pub mod screening;
pub mod train;

pub use error::{Error, Result};
