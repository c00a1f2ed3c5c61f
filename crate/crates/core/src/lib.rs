//! Marginal sequential Monte Carlo.
//!
//! The crate has three layers. [`probkit`] holds log-domain arithmetic,
//! quadrature and random streams. [`model`], [`engine`] and [`zoo`] define
//! target sequences, run the marginal and path-space particle engines over
//! them, and build the named filters. [`oracle`], [`variance`] and
//! [`experiments`] provide exact references and the studies that check the
//! particle output against them.

// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod probkit;
pub mod variance;
pub mod zoo;

pub use error::{Error, Result};
