use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(pi_forge::Error),
}

impl From<pi_forge::Error> for CliError {
    fn from(e: pi_forge::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(pi_forge::Error::Io(e))
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit: i32,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }

    pub fn code(&self) -> &'static str {
        use pi_forge::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                E::UnknownQuantity(_) => "unknown_quantity",
                E::DuplicateName(_) => "duplicate_name",
                E::InvalidUnits(_) => "invalid_units",
                E::EmptyRegistry => "empty_registry",
                E::LengthMismatch { .. } => "length_mismatch",
                E::InvalidArgument(_) => "invalid_argument",
                E::NonPositive { .. } => "non_positive",
                E::NonFinite(_) => "non_finite",
                E::LogOverflow { .. } => "log_overflow",
                E::ZeroAnchor(_) => "zero_anchor",
                E::EmptyCandidates { .. } => "empty_candidates",
                E::CombinatorialCap { .. } => "combinatorial_cap",
                E::Data(_) => "data",
                E::Csv(_) => "csv",
                E::Io(_) => "io",
                E::Config(_) => "config",
                E::ShootingFailed(_) => "shooting_failed",
                E::Diverged { .. } => "diverged",
                E::Numerical(_) => "numerical",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    /// One line of JSON for stderr.
    pub fn to_line(&self) -> String {
        let line = ErrorLine {
            error: self.code(),
            exit: self.exit_code(),
            message: self.message().replace('\n', " "),
        };
        serde_json::to_string(&line).expect("serialisable")
    }
}
