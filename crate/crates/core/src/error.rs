use thiserror::Error;

/// Errors surfaced by the pruning library.
///
/// Variants are split between validation failures (bad inputs, malformed
/// files) and numerical failures (rank collapse, non-termination). The CLI
/// maps the former to exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("supports cannot be aligned by index: nodes differ at position {0}")]
    UnalignableSupports(usize),
    #[error("total-variation distance undefined: both measures have zero mass")]
    BothZero,
    #[error("target TV distance {target} unreachable while keeping weights positive")]
    TargetUnreachable { target: f64 },
    #[error("basis evaluation outside validated domain: {0}")]
    EvaluationDomain(String),
    #[error("non-finite entry in input matrix")]
    NonFiniteInput,
    #[error("global index {0} not present in the QR window")]
    IndexNotInWindow(usize),
    #[error("kernel vector is identically zero")]
    ZeroKernel,
    #[error("no nontrivial kernel found with {active} active rows and {cols} columns")]
    RankCollapse { active: usize, cols: usize },
    #[error("stream yielded {got} nodes but at least {need} are required")]
    StreamTooShort { got: usize, need: usize },
    #[error("iteration cap {0} exceeded (possible cycling)")]
    MaxIterationsExceeded(usize),
    #[error("linear program is infeasible (phase-1 objective {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-positive weight {value} at line {line}")]
    NonPositiveWeight { line: usize, value: f64 },
    #[error("bad magic bytes: expected QPN1")]
    BadMagic,
    #[error("truncated file at byte offset {0}")]
    TruncatedFile(u64),
    #[error("dimension mismatch: stream has dim {stream}, basis expects {basis}")]
    DimensionMismatch { stream: usize, basis: usize },
    #[error("rejection sampler acceptance rate too low: no acceptance in {0} proposals")]
    AcceptanceTooLow(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown pruning method '{0}'")]
    UnknownMethod(String),
}

impl Error {
    /// CLI exit code classification: 2 = validation, 3 = numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankCollapse { .. }
            | Error::MaxIterationsExceeded(_)
            | Error::Infeasible(_)
            | Error::Unbounded
            | Error::TargetUnreachable { .. }
            | Error::AcceptanceTooLow(_)
            | Error::ZeroKernel => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
