use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The relative state left the domain where the kinematics are defined.
    #[error("degenerate relative state: {0}")]
    DegenerateState(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot take a conformal quantile of an empty score set")]
    EmptyScores,

    /// A risk group was never visited by any calibration trajectory.
    #[error(
        "risk group B{group} was not visited by any calibration trajectory; \
         enlarge the calibration campaign or merge groups"
    )]
    EmptyGroup { group: usize },

    #[error("config hash mismatch: artifact was produced under {expected}, current config is {found}")]
    HashMismatch { expected: String, found: String },

    #[error("singular formation input map (|det| = {0:e})")]
    SingularInputMap(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}
