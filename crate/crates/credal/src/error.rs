//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (layer sizes, hyperparameters, schedules).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid call input (dimension mismatch, empty data, missing fields).
    #[error("input error: {0}")]
    Input(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged: non-finite value at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// An error raised while training a specific ensemble member.
    #[error("member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    /// Probability intervals with empty intersection with the simplex.
    #[error("infeasible probability intervals: {0}")]
    Infeasible(String),

    /// The feasibility solver hit its iteration cap without terminating.
    #[error("feasibility solver did not terminate within {0} iterations")]
    IterationCap(usize),

    /// Malformed input file content.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed but semantically invalid file content.
    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn for_member(member: usize) -> impl FnOnce(Error) -> Error {
        move |source| Error::Member {
            member,
            source: Box::new(source),
        }
    }
}
