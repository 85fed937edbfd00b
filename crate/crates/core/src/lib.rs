//! Multiscale simulation of multicellular feedback control in synthetic
//! microbial consortia: aggregate ODE models, a spatial agent engine, a
//! P/PI/PD/PID controller family and chemostat composition control.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod aggregate;
pub mod composition;
pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numfmt;
pub mod ode;

pub use error::{Error, Result};
pub use model::{AggregateState, ConsortiumParams, ReferenceSignal};
