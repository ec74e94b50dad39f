//! Workflow-guided exploration for web tasks.
//!
//! The crate is `no_std` (with `alloc`) and contains the complete algorithmic
//! core: the DOM model, simulated tasks, the workflow constraint language,
//! lattice induction, the workflow exploration policy, the neural DOM policy
//! with its training code, and the training loop.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod demo;
pub mod dom;
pub mod domnet;
pub mod dsl;
pub mod env;
pub mod lattice;
pub mod nn;
pub mod text;
pub mod trainer;
pub mod workflow;
