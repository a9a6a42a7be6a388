//! Minimal dense-array engine with eager, tape-recorded reverse-mode
//! differentiation.
//!
//! Every operation executes immediately and appends a node to a [`Tape`].
//! [`Tape::backward`] walks the nodes in reverse insertion order (which is a
//! reverse topological order, since inputs always precede their outputs) and
//! accumulates gradients additively into every node that requires them.

mod array;
mod gradcheck;
mod kernels;
mod real;
mod tape;

pub use array::DiffArray;
pub use gradcheck::{grad_check, grad_check_many};
pub use real::Real;
pub use tape::{Tape, Var};

#[cfg(test)]
mod tests;
