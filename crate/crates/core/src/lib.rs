//! Power allocation for device-to-device interference networks: channel
//! simulation, the WMMSE baseline, a small neural-network toolkit, the
//! unrolled graph network built on it, and the evaluation suites.

pub mod channel;
pub mod dataset;
mod error;
pub mod experiments;
pub mod io;
pub mod nn;
pub mod rng;
pub mod runconfig;
pub mod uwgnn;
pub mod wmmse;

pub use error::{Error, Result};
