//! Monte Carlo downlink simulator for co-existing multicell and cell-free
//! massive MIMO networks.

pub mod association;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod fronthaul;
pub mod geometry;
pub mod linalg;
pub mod pilots;
pub mod precoding;
pub mod propagation;
pub mod run;

pub use error::{Result, SimError};
