//! Solver library for wireless-resource sharing among service providers in
//! UAV-assisted networks: deferred-acceptance user association, whale-
//! optimization subchannel assignment, Lagrangian/KKT power allocation,
//! comparison baselines, and a seeded experiment harness.

pub mod association;
pub mod baselines;
pub mod channel;
pub mod economics;
pub mod error;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod power;
pub mod woa;

pub use error::{Error, Result};
