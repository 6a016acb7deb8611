//! Dense row-stochastic matrices, their structural classifiers, backward
//! products over time-varying sequences, explicit convergence bounds, and a
//! decentralized projected subgradient optimizer for unbalanced digraphs.
//!
//! The crate is `no_std` + `alloc`; all IO lives in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod ergodicity;
pub mod matrix;
pub mod objectives;
pub mod optimizer;
pub mod product;
pub mod topology;

pub use matrix::{IndexSet, MatrixError, StochasticMatrix};
pub use product::{BackwardProduct, ConstantSequence, MaterializedSequence, MatrixSequence};
