pub mod arch;
pub mod arm;
pub mod error;
pub mod formats;
pub mod nn;
pub mod readout;
pub mod runner;
pub mod synthetic;

pub use error::{Error, Result};
