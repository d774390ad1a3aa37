//! Flow-aware higher-order networks for block-based particle tracing.
//!
//! Streamlines traced through a steady vector field become block sequences;
//! those sequences are summarized as networks whose transitions are fitted
//! to observed block densities, evaluated by density propagation, and
//! partitioned into communities with the map equation.

pub mod community;
pub mod density;
pub mod error;
pub mod flowfield;
pub mod hon;
pub mod optim;
pub mod pipeline;
pub mod registry;

pub use error::{Error, Result};
