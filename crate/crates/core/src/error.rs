use thiserror::Error;

/// Every failure the library reports. Variant names are part of the
/// machine-readable interface (the CLI echoes them verbatim).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("in-band entry T[{row},{col}] = {value} is not positive")]
    NonPositiveInBandEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, outside tolerance {tol}")]
    RowSumViolation { row: usize, sum: f64, tol: f64 },
    #[error("truncation order {requested} needs {needed} rows but only {available} exist")]
    SizeExceeded { requested: usize, needed: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no positive bidiagonal factorization: {0}")]
    PbfDoesNotExist(String),
    #[error("depth {depth} is below the minimum {min}")]
    DepthTooSmall { depth: usize, min: usize },
    #[error("chain is in {found} form, raw form required")]
    NotRawForm { found: String },
    #[error("matrix declared stochastic but residual diagonal deviates from identity by {deviation}")]
    ResidualNotIdentity { deviation: f64 },
    #[error("extreme diagonal entry vanishes at index {index}")]
    ZeroExtremeDiagonal { index: usize },
    #[error("index {index} outside the evaluated table (max {max})")]
    IndexOutOfTable { index: usize, max: usize },
    #[error("eigenvalues {k} and {next} are separated by {gap}, below {tol}")]
    NotSimpleSpectrum { k: usize, next: usize, gap: f64, tol: f64 },
    #[error("eigenvalue estimate {re}+{im}i is not real")]
    ComplexEigenvalue { re: f64, im: f64 },
    #[error("Perron vector entry {index} = {value} is not positive")]
    NonPositivePerronVector { index: usize, value: f64 },
    #[error("biorthogonality residual {residual} exceeds {tol}")]
    BiorthogonalityFailure { residual: f64, tol: f64 },
    #[error("initial-condition matrix is singular or malformed: {0}")]
    SingularInitialConditions(String),
    #[error("mass-sum residual {residual} exceeds {tol}")]
    MassBoundViolation { residual: f64, tol: f64 },
    #[error("state {state} outside 0..={max}")]
    StateOutOfRange { state: usize, max: usize },
    #[error("generating-function argument s = {s} must satisfy |s| < 1")]
    SOutOfRange { s: f64 },
    #[error("constructive classification check failed: {0}")]
    ClassificationMismatch(String),
    #[error("need at least {min} truncation orders, got {got}")]
    InsufficientTruncations { got: usize, min: usize },
    #[error("row {row} of the sampling matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("only {samples} samples, at least {min} recommended")]
    InsufficientSamples { samples: u64, min: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Stable identifier of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPositiveInBandEntry { .. } => "NonPositiveInBandEntry",
            Error::RowSumViolation { .. } => "RowSumViolation",
            Error::SizeExceeded { .. } => "SizeExceeded",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::PbfDoesNotExist(_) => "PbfDoesNotExist",
            Error::DepthTooSmall { .. } => "DepthTooSmall",
            Error::NotRawForm { .. } => "NotRawForm",
            Error::ResidualNotIdentity { .. } => "ResidualNotIdentity",
            Error::ZeroExtremeDiagonal { .. } => "ZeroExtremeDiagonal",
            Error::IndexOutOfTable { .. } => "IndexOutOfTable",
            Error::NotSimpleSpectrum { .. } => "NotSimpleSpectrum",
            Error::ComplexEigenvalue { .. } => "ComplexEigenvalue",
            Error::NonPositivePerronVector { .. } => "NonPositivePerronVector",
            Error::BiorthogonalityFailure { .. } => "BiorthogonalityFailure",
            Error::SingularInitialConditions(_) => "SingularInitialConditions",
            Error::MassBoundViolation { .. } => "MassBoundViolation",
            Error::StateOutOfRange { .. } => "StateOutOfRange",
            Error::SOutOfRange { .. } => "SOutOfRange",
            Error::ClassificationMismatch(_) => "ClassificationMismatch",
            Error::InsufficientTruncations { .. } => "InsufficientTruncations",
            Error::NotStochastic { .. } => "NotStochastic",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }

    /// True when the error is caused by the caller's input rather than by a
    /// numerical breakdown inside the library.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotSimpleSpectrum { .. }
                | Error::ComplexEigenvalue { .. }
                | Error::NonPositivePerronVector { .. }
                | Error::BiorthogonalityFailure { .. }
                | Error::MassBoundViolation { .. }
                | Error::ClassificationMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
