use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. Sensor and set indices in messages
/// are 1-based, matching the external file formats.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("PartitionNotDisjoint: sensor {sensor} appears in set {first} and set {second}")]
    PartitionNotDisjoint {
        sensor: usize,
        first: usize,
        second: usize,
    },
    #[error("PartitionIncomplete: sensor {sensor} belongs to no set")]
    PartitionIncomplete { sensor: usize },
    #[error("ConstraintExceedsSet: set {set} keeps {keep} of {size} sensors")]
    ConstraintExceedsSet { set: usize, keep: usize, size: usize },
    #[error("EmptySelection: at least one sensor must be kept")]
    EmptySelection,
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("NonpositiveSigma: set {set} has sigma {sigma}")]
    NonpositiveSigma { set: usize, sigma: f64 },
    #[error("ZeroRow: sensing row {row} has zero norm")]
    ZeroRow { row: usize },
    #[error("IndexOutOfRange: index {index} not in 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("CandidateNotAvailable: sensor {candidate} is not in the current complement")]
    CandidateNotAvailable { candidate: usize },
    #[error("EmptySubset: operation needs at least one sensor")]
    EmptySubset,
    #[error("NominalPoint: {0}")]
    NominalPoint(String),
    #[error("NotEnoughCandidates: need {need}, have {have}")]
    NotEnoughCandidates { need: usize, have: usize },
    #[error("SearchSpaceTooLarge: {cardinality} candidates exceed the cap of {cap}")]
    SearchSpaceTooLarge { cardinality: u128, cap: u128 },
    #[error("RankDeficient: smallest singular value {smallest_singular_value:e}")]
    RankDeficient { smallest_singular_value: f64 },
    #[error("NumericalFailure: {0}")]
    NumericalFailure(String),
    #[error("ZeroReference: reference vector has zero norm")]
    ZeroReference,
    #[error("DomainViolation: {0}")]
    DomainViolation(String),
    #[error("DegenerateOptimum: optimal frame potential {0} is not positive")]
    DegenerateOptimum(f64),
    #[error("DeltaExceedsD: spectral spread {delta} is not below mean row energy {d}")]
    DeltaExceedsD { delta: f64, d: f64 },
    #[error("ZeroSignalPower: set {set} has no noise-free signal energy")]
    ZeroSignalPower { set: usize },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("Io: {0}")]
    Io(String),
}

impl Error {
    /// Stable variant name, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::PartitionNotDisjoint { .. } => "PartitionNotDisjoint",
            Error::PartitionIncomplete { .. } => "PartitionIncomplete",
            Error::ConstraintExceedsSet { .. } => "ConstraintExceedsSet",
            Error::EmptySelection => "EmptySelection",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonpositiveSigma { .. } => "NonpositiveSigma",
            Error::ZeroRow { .. } => "ZeroRow",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::CandidateNotAvailable { .. } => "CandidateNotAvailable",
            Error::EmptySubset => "EmptySubset",
            Error::NominalPoint(_) => "NominalPoint",
            Error::NotEnoughCandidates { .. } => "NotEnoughCandidates",
            Error::SearchSpaceTooLarge { .. } => "SearchSpaceTooLarge",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::ZeroReference => "ZeroReference",
            Error::DomainViolation(_) => "DomainViolation",
            Error::DegenerateOptimum(_) => "DegenerateOptimum",
            Error::DeltaExceedsD { .. } => "DeltaExceedsD",
            Error::ZeroSignalPower { .. } => "ZeroSignalPower",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 search-space cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SearchSpaceTooLarge { .. } => 3,
            Error::RankDeficient { .. }
            | Error::NumericalFailure(_)
            | Error::ZeroReference
            | Error::DegenerateOptimum(_)
            | Error::DeltaExceedsD { .. }
            | Error::ZeroSignalPower { .. } => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}
