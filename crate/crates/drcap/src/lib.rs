//! File formats, configuration, the TCP negotiation transport and the
//! experiment runners behind the `drcap` binary.

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod socket;

pub use error::{Error, Result};
