//! File formats, reports and parallel sweeps around [`lpvssa_core`].

pub mod error;
pub mod formats;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};
pub use lpvssa_core as core;
