use thiserror::Error;

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::experiment::ExperimentError;
use crate::pragmatics::PragmaticsError;
use crate::speakers::SpeakerError;
use crate::worldgen::WorldError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Speaker(#[from] SpeakerError),
    #[error(transparent)]
    Pragmatics(#[from] PragmaticsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}
