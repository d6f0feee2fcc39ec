//! Road planning for informal settlements.
//!
//! A slum is modeled as a planar subdivision whose bounded faces are
//! places and whose exterior boundary is the existing road network. A
//! planner upgrades candidate edges into roads until every place touches
//! the network, then keeps adding roads to shorten travel between places.

pub mod baselines;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod plan;
pub mod state;
pub mod trainer;

pub use error::{Error, Result};
