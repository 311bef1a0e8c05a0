//! Target-attentive diagnosis prediction over heterogeneous clinical-record
//! graphs.
//!
//! Clinical records become a typed graph ([`hin`]); patient neighborhoods are
//! aggregated with diagnosis-conditioned attention at the node level and the
//! type level ([`model`]); three objectives train the whole thing jointly
//! ([`objectives`], [`train`]); [`eval`] scores the two prediction tasks and
//! exports attention weights for inspection.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod hin;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod train;

pub use error::{Error, Result};
