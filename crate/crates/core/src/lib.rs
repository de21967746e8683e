//! Realization and identification of stochastic LPV state-space models in innovation
//! form, with affine scheduling dependence, from input, output and scheduling data.
//!
//! The crate is `no_std` and needs only `alloc`. File formats and the command-line
//! front end live in the `lpvssa` crate.

#![no_std]

extern crate alloc;

pub mod benchmark;
pub mod covariances;
pub mod error;
pub mod hankel;
pub mod identify;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod realization;
pub mod words;

pub use covariances::{MatrixSeries, SecondMomentSet};
pub use error::{Error, Result, Stage};
pub use hankel::{ColumnIndex, RowIndex, SearchStrategy, Selection};
pub use identify::{
    identify, IdentifyConfig, IdentifyFailure, IdentifyReport, MomentConvention, SplitVariant,
};
pub use metrics::FitReport;
pub use model::{Dataset, GeneratorSettings, LpvSsaModel, SignalDistribution, Simulation};
pub use realization::{DeterministicRealization, StochasticRealization};
pub use words::{ScheduleWeights, Word};

pub use nalgebra::DMatrix;
