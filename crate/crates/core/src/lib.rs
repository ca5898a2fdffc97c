//! Gaussian moment-dynamics simulator for planar quantum squeezing of
//! spin-1 atomic ensembles by stroboscopic QND Faraday probing.

pub mod dynamics;
pub mod error;
pub mod gaussian;
pub mod magnetometry;
pub mod measurement;
pub mod metrics;
pub mod runner;
pub mod spin;

pub use error::{Result, SimError};
