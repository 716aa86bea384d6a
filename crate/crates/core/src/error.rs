use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank deficient: observed rank {observed}, required {required}")]
    RankDeficient { observed: usize, required: usize },

    #[error("window out of range: start {start}, depth {depth}, cols {cols} needs index {needed} but signal has {len} samples")]
    InvalidWindow {
        start: usize,
        depth: usize,
        cols: usize,
        needed: usize,
        len: usize,
    },

    #[error("trajectory too short: need at least {required} samples, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("could not generate a persistently exciting input of order {order} after {attempts} attempts")]
    GenerationFailure { order: usize, attempts: usize },

    #[error("attack budget exceeded: {affected} sensors affected, at most {budget} allowed")]
    AttackBudget { affected: usize, budget: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("learning failed for subset {subset_id} {indices:?}: rank {observed} but {required} required")]
    Learning {
        subset_id: usize,
        indices: Vec<usize>,
        observed: usize,
        required: usize,
    },

    #[error("no sensor responded to the impulse")]
    NoResponse,

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// True for failures that are mathematical (rank / learning) rather than
    /// usage or precondition problems.
    pub fn is_mathematical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::Learning { .. } | Error::NoResponse
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
