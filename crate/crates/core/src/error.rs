use crate::domain::AllocationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("assignment sets ineligible cell (customer {customer}, fund {fund})")]
    AssignedIneligible { customer: usize, fund: usize },

    #[error("exposure count must be positive")]
    ZeroExposures,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("sigma must be positive, got {0}")]
    NonpositiveSigma(f64),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("AUC is undefined when every label belongs to one class")]
    SingleClass,

    #[error("fund {0} has no remaining demand")]
    ZeroDemand(usize),

    #[error("customer {0} has no eligible fund with remaining demand")]
    NoEligibleFund(usize),

    #[error("allocation got stuck: {detail}")]
    InfeasibleDuringAllocation {
        detail: String,
        partial: Box<AllocationResult>,
    },

    #[error("instance too large for exhaustive search ({customers} customers x {funds} funds; limit {max_customers} x {max_funds})")]
    TooLarge {
        customers: usize,
        funds: usize,
        max_customers: usize,
        max_funds: usize,
    },

    #[error("no feasible assignment exists")]
    Infeasible,

    #[error("exact flow solver requires K = 1, got K = {0}")]
    UnsupportedK(usize),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("missing required column '{0}'")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name, printed on stderr by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::AssignedIneligible { .. } => "ASSIGNED_INELIGIBLE",
            Error::ZeroExposures => "ZERO_EXPOSURES",
            Error::DimMismatch(_) => "DIM_MISMATCH",
            Error::NonpositiveSigma(_) => "NONPOSITIVE_SIGMA",
            Error::EmptyBatch => "EMPTY_BATCH",
            Error::Diverged { .. } => "DIVERGED",
            Error::SingleClass => "SINGLE_CLASS",
            Error::ZeroDemand(_) => "ZERO_DEMAND",
            Error::NoEligibleFund(_) => "NO_ELIGIBLE_FUND",
            Error::InfeasibleDuringAllocation { .. } => "INFEASIBLE_DURING_ALLOCATION",
            Error::TooLarge { .. } => "TOO_LARGE",
            Error::Infeasible => "INFEASIBLE",
            Error::UnsupportedK(_) => "UNSUPPORTED_K",
            Error::InvalidInstance(_) => "INVALID_INSTANCE",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Schema(_) => "SCHEMA_ERROR",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Process exit code: 2 config/validation, 3 I/O, 4 infeasibility, 5 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } | Error::Schema(_) => 3,
            Error::InfeasibleDuringAllocation { .. } | Error::Infeasible | Error::NoEligibleFund(_) => 4,
            Error::Diverged { .. } => 5,
            _ => 2,
        }
    }
}
