//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation as a [`ValueNode`]; [`Tape::backward`]
//! walks the nodes in reverse creation order. [`Tape::stop_gradient`] inserts a
//! node that is the identity going forward and a dead end going backward.

mod check;
mod matrix;
mod tape;

pub use check::{grad_check, relative_error, CoordinateCheck, GradCheckReport, RELU_KINK_TOL};
pub use matrix::{argmax, Matrix};
pub use tape::{softmax_vec, Op, Tape, ValueNode, Var};
pub(crate) use tape::check_distribution_rows;

#[cfg(test)]
mod tests;
