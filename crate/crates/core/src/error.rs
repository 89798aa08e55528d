use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Data,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("design references unknown column `{0}`")]
    UnknownColumn(String),
    #[error("treatment at row {row} is {value}; only 0 and 1 are accepted")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFiniteValue { row: usize, column: String },
    #[error("cannot parse `{value}` in column `{column}` at row {row}")]
    InvalidCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("treatment is constant; both arms must be present")]
    DegenerateTreatment,
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("i/o: {0}")]
    Io(String),

    #[error("parameter {param} = {value} outside {range}")]
    ParamOutOfRange {
        param: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("scheme {scheme} requires parameter {param}")]
    MissingParam {
        scheme: &'static str,
        param: &'static str,
    },
    #[error("scheme {scheme} does not take parameter {param}")]
    ExtraneousParam {
        scheme: &'static str,
        param: &'static str,
    },
    #[error("unknown weighting scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error(
        "logistic fit did not converge after {iterations} iterations (score norm {score_norm:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        score_norm: f64,
        last_coefficients: Vec<f64>,
    },
    #[error("arm {arm} has {n} units but the outcome design needs at least {required}")]
    ArmTooSmall { arm: u8, n: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("infinite weight at rows {rows:?}")]
    InfiniteWeight { rows: Vec<usize> },
    #[error("arm {arm} has no positive weight")]
    EmptyEffectiveArm { arm: u8 },
    #[error("scheme {scheme} unsupported here: {reason}")]
    UnsupportedScheme {
        scheme: String,
        reason: &'static str,
    },
    #[error("scheme {0} is not affine in the propensity score")]
    SchemeNotAffine(String),
    #[error("selection function is zero for every unit")]
    AllZeroSelection,
    #[error("bread matrix is singular (condition estimate {condition:.3e})")]
    SingularBread { condition: f64 },
    #[error("{failed} of {total} bootstrap resamples failed")]
    TooManyFailedResamples { failed: usize, total: usize },
    #[error("covariate `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnknownColumn(_) => "UnknownColumn",
            Error::NonBinaryTreatment { .. } => "NonBinaryTreatment",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::InvalidCell { .. } => "InvalidCell",
            Error::DegenerateTreatment => "DegenerateTreatment",
            Error::MalformedTable(_) => "MalformedTable",
            Error::Io(_) => "Io",
            Error::ParamOutOfRange { .. } => "ParamOutOfRange",
            Error::MissingParam { .. } => "MissingParam",
            Error::ExtraneousParam { .. } => "ExtraneousParam",
            Error::UnknownScheme(_) => "UnknownScheme",
            Error::Config(_) => "Config",
            Error::SingularDesign => "SingularDesign",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::ArmTooSmall { .. } => "ArmTooSmall",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InfiniteWeight { .. } => "InfiniteWeight",
            Error::EmptyEffectiveArm { .. } => "EmptyEffectiveArm",
            Error::UnsupportedScheme { .. } => "UnsupportedScheme",
            Error::SchemeNotAffine(_) => "SchemeNotAffine",
            Error::AllZeroSelection => "AllZeroSelection",
            Error::SingularBread { .. } => "SingularBread",
            Error::TooManyFailedResamples { .. } => "TooManyFailedResamples",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::AllReplicatesFailed(_) => "AllReplicatesFailed",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MissingColumn(_)
            | Error::UnknownColumn(_)
            | Error::NonBinaryTreatment { .. }
            | Error::NonFiniteValue { .. }
            | Error::InvalidCell { .. }
            | Error::DegenerateTreatment
            | Error::MalformedTable(_)
            | Error::Io(_)
            | Error::ArmTooSmall { .. }
            | Error::ZeroVariance(_) => ErrorClass::Data,
            Error::ParamOutOfRange { .. }
            | Error::MissingParam { .. }
            | Error::ExtraneousParam { .. }
            | Error::UnknownScheme(_)
            | Error::Config(_)
            | Error::UnsupportedScheme { .. }
            | Error::SchemeNotAffine(_)
            | Error::DimensionMismatch(_) => ErrorClass::Config,
            Error::SingularDesign
            | Error::NonConvergence { .. }
            | Error::InfiniteWeight { .. }
            | Error::EmptyEffectiveArm { .. }
            | Error::AllZeroSelection
            | Error::SingularBread { .. }
            | Error::TooManyFailedResamples { .. }
            | Error::AllReplicatesFailed(_) => ErrorClass::Numerical,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::MalformedTable(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
