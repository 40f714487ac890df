pub mod cli;
pub mod error;
pub mod features;
pub mod io;
pub mod losses;
pub mod ot;
pub mod weighting;

pub use error::{Error, Result};
