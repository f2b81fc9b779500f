//! Core library of the offline RL sample-complexity workbench.
//!
//! Everything in this crate is pure computation over in-memory data: toy
//! continuous-control environments with a closed-form LQR expert, dataset
//! construction and splitting, small MLP function approximators with exact
//! reverse-mode gradients, the offline learners (BC, TD3-BC, BCQ, IQL), and
//! the evaluation metrics used to study them. File formats, configuration,
//! the sweep runner, and the CLI live in the companion `offrl` crate.
//!
//! The crate is `no_std` (with `alloc`); enable the `std` feature for
//! `std::error::Error` integration.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod algo;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod lqr;
pub mod nn;
pub mod rng;

pub use error::CoreError;
