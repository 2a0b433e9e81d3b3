use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped by how a caller should react: bad declarations and
/// bad data ([`Error::is_data_error`]) versus numerical failures of an engine
/// ([`Error::is_numerical`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("invalid units declaration: {0}")]
    InvalidUnits(String),

    #[error("registry is empty")]
    EmptyRegistry,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive value {value} in column `{column}` at row {row}")]
    NonPositive {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("|log pi| exceeds {limit} in group {group} at row {row}")]
    LogOverflow { group: usize, row: usize, limit: f64 },

    #[error("anchor `{0}` has a zero exponent")]
    ZeroAnchor(String),

    #[error("no candidates within power bound {bound}: {what}")]
    EmptyCandidates { bound: i64, what: String },

    #[error("{count} candidate combinations exceed the cap of {cap}; use the optfit engine or lower the bound")]
    CombinatorialCap { count: u128, cap: u128 },

    #[error("malformed data: {0}")]
    Data(String),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("shooting did not converge: {0}")]
    ShootingFailed(String),

    #[error("training diverged at epoch {epoch} (last stable epoch {last_stable})")]
    Diverged { epoch: usize, last_stable: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of an algorithm on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ShootingFailed(_)
                | Error::Diverged { .. }
                | Error::Numerical(_)
                | Error::LogOverflow { .. }
                | Error::NonFinite(_)
        )
    }

    /// True for malformed declarations, files or data.
    pub fn is_data_error(&self) -> bool {
        !self.is_numerical()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
