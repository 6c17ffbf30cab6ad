//! Subtask-graph inference.
//!
//! Tasks are factored MDPs parameterized by a latent [`graph::SubtaskGraph`]:
//! every subtask has a precondition over the completion vector and a reward.
//! An agent explores an unseen task for a few episodes ([`adapt`]), induces
//! the preconditions from the observed `(x, e)` pairs with decision trees
//! ([`infer`]), and then executes the inferred graph with a gradient-based
//! soft-logic policy ([`grprop`]). [`harness`] runs whole trials and reports
//! normalized return, precondition precision/recall and coverage.

pub mod adapt;
pub mod env;
pub mod error;
pub mod graph;
pub mod grprop;
pub mod harness;
pub mod infer;

pub use error::{Error, Result};
