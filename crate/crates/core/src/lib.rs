//! Performative prediction toolkit: repeated risk minimization under
//! model-induced distribution shift, exact optimal transport, and the
//! generalization bounds that go with it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod logistic;
pub mod model;
pub mod rerm;
pub mod robust;
pub mod sweep;
pub mod synthetic;
pub mod transition;
pub mod transport;
pub mod util;
pub mod validate;

pub use error::{Error, Result};
