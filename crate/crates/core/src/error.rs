use alloc::boxed::Box;
use alloc::string::String;

use crate::words::Word;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of the realization and identification routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sample index {index} out of range for a path of length {len}")]
    Range { index: usize, len: usize },
    #[error("no value stored for word {0}")]
    MissingWord(Word),
    #[error("no rank-{requested} selection found; best achieved rank is {achieved}")]
    RankDeficient { requested: usize, achieved: usize },
    #[error("ill-conditioned Hankel matrix: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    IllConditioned { sigma_min: f64, sigma_max: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("matrix family is not stable (spectral radius {0}); no unique stationary solution")]
    Unstable(f64),
    #[error(
        "innovation variance for letter {letter} is not positive definite at iteration {iteration} (min eigenvalue {eigenvalue:e})"
    )]
    Indefinite {
        letter: u8,
        iteration: usize,
        eigenvalue: f64,
    },
    #[error("simulation diverged at sample {0}")]
    Divergence(usize),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: Stage, source: Box<Error> },
}

impl Error {
    /// Numerical or algorithmic failure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. }
            | Error::IllConditioned { .. }
            | Error::Singular(_)
            | Error::Unstable(_)
            | Error::Indefinite { .. }
            | Error::Divergence(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

/// Pipeline stage of the identification algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    InputCovariances,
    DeterministicRealization,
    CovarianceSplit,
    StochasticRealization,
    Composition,
}

impl core::fmt::Display for Stage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let name = match self {
            Stage::InputCovariances => "input covariance",
            Stage::DeterministicRealization => "deterministic realization",
            Stage::CovarianceSplit => "covariance split",
            Stage::StochasticRealization => "stochastic realization",
            Stage::Composition => "composition",
        };
        f.write_str(name)
    }
}
