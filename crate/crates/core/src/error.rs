use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps onto one of the command-line exit codes through
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("scaled energy {0} lies at or below the potential minimum (-1)")]
    BelowMinimum(f64),

    #[error("no real turning points: discriminant {0} is not positive")]
    NoTurningPoint(f64),

    #[error("j = {j} exceeds the basis cutoff j_max = {j_max}")]
    BasisOverflow { j: u32, j_max: u32 },

    #[error("superposition vanishes identically")]
    DegenerateState,

    #[error(
        "population {tail:.3e} in the top two shells exceeds tolerance {tolerance:.3e} \
         at tau = {tau}; increase j_max"
    )]
    Truncation { tail: f64, tolerance: f64, tau: f64 },

    #[error("not converged: {0}")]
    Convergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status used by the `rotordyn` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Truncation { .. } | Error::Convergence(_) => 3,
            Error::Io(_) => 5,
            _ => 4,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
