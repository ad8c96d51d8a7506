//! Hierarchical semi-supervised learning on label hierarchies.
//!
//! The crate bundles a small reverse-mode autodiff engine, label hierarchy
//! utilities, a synthetic data engine, a disentangled multi-head model, the
//! MixMatch and FixMatch losses, a trainer and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod model;
pub mod rng;
pub mod optim;
pub mod ssl;
pub mod train;

pub use error::{Error, Result};
