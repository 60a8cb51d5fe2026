//! Stochastic simulation of coagulation with surface fusion for particles
//! described by surface area and volume.

pub mod error;
pub mod coag_mc;
pub mod config;
pub mod experiments;
pub mod fusion_flow;
pub mod kernels;
pub mod moments;
pub mod numeric;
pub mod ode;
pub mod selfsim;
pub mod state;

pub use error::{Error, Result};
