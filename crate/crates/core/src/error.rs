use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(
        "path passes within {distance:.3e} of singularity {singularity} (minimum {d_min:.3e})"
    )]
    PathTooCloseToSingularity {
        distance: f64,
        singularity: String,
        d_min: f64,
    },
    #[error("adaptive step fell below {0:.3e}")]
    StepUnderflow(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("coefficient evaluated at a singular point {0}")]
    SingularEvaluation(String),
    #[error("singularities coincide")]
    DegenerateRoots,
    #[error("both singularities are real; labelling undefined")]
    LabelUndefined,
    #[error("eigenvalues of the leading matrix repeat")]
    RepeatedEigenvalues,
    #[error("family is not generic")]
    NotGeneric,
    #[error("base point lies on the line through the singularities")]
    BasePointOnSingularLine,
    #[error("eigenvalue modules collide (relative gap {0:.3e})")]
    EigenvalueCollision(f64),
    #[error("eigenvalues have equal modules")]
    EqualModules,
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("leading matrix is resonant")]
    ResonantLeadingMatrix,
    #[error("matching radius too large: least term {0:.3e}")]
    MatchingRadiusTooLarge(f64),
    #[error("sectors do not cover a punctured neighbourhood")]
    CoverFailure,
    #[error("tie in Re(lambda/t^k) ordering")]
    OrderingTie,
    #[error("map is not hyperbolic")]
    NonHyperbolic,
    #[error("word is not reduced: {0}")]
    WordNotReduced(String),
    #[error("sample point hits the excluded set")]
    SampleHitsExcludedSet,
    #[error("sample point lies at the repeller limit")]
    SampleNearRepeller,
    #[error("empty word after cancellation")]
    EmptyWord,
    #[error("invalid word letter '{0}'")]
    InvalidLetter(char),
    #[error("ParseError:{line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}

impl LabError {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::PathTooCloseToSingularity { .. } => "PathTooCloseToSingularity",
            LabError::StepUnderflow(_) => "StepUnderflow",
            LabError::DimensionMismatch(_) => "DimensionMismatch",
            LabError::SingularEvaluation(_) => "SingularEvaluation",
            LabError::DegenerateRoots => "DegenerateRoots",
            LabError::LabelUndefined => "LabelUndefined",
            LabError::RepeatedEigenvalues => "RepeatedEigenvalues",
            LabError::NotGeneric => "NotGeneric",
            LabError::BasePointOnSingularLine => "BasePointOnSingularLine",
            LabError::EigenvalueCollision(_) => "EigenvalueCollision",
            LabError::EqualModules => "EqualModules",
            LabError::SingularMatrix(_) => "SingularMatrix",
            LabError::ResonantLeadingMatrix => "ResonantLeadingMatrix",
            LabError::MatchingRadiusTooLarge(_) => "MatchingRadiusTooLarge",
            LabError::CoverFailure => "CoverFailure",
            LabError::OrderingTie => "OrderingTie",
            LabError::NonHyperbolic => "NonHyperbolic",
            LabError::WordNotReduced(_) => "WordNotReduced",
            LabError::SampleHitsExcludedSet => "SampleHitsExcludedSet",
            LabError::SampleNearRepeller => "SampleNearRepeller",
            LabError::EmptyWord => "EmptyWord",
            LabError::InvalidLetter(_) => "InvalidLetter",
            LabError::Parse { .. } => "ParseError",
            LabError::InvalidArgument(_) => "InvalidArgument",
            LabError::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
