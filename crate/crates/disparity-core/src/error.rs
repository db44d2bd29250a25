use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the core can report. The variant names the failing module;
/// the payload names the stratum, record or variable involved.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // data_model
    #[error("data_model: missing column `{0}`")]
    MissingColumn(String),
    #[error("data_model: duplicate (person_id, visit_id) = ({0}, {1})")]
    DuplicateKey(String, String),
    #[error("data_model: bad value in column `{column}` at row {row}: {detail}")]
    BadValue { column: String, row: usize, detail: String },
    #[error("data_model: missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("data_model: invalid trial specification: {0}")]
    InvalidSpec(String),

    // emulation
    #[error("emulation: criterion references unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("emulation: table has no eligibility flags; run evaluate_eligibility first")]
    NotAnnotated,
    #[error("emulation: standard population is empty")]
    EmptyStandard,

    // numerics
    #[error("numerics: knots must be strictly increasing and finite")]
    BadKnots,
    #[error("numerics: separation detected ({0})")]
    SeparationDetected(String),
    #[error("numerics: rank-deficient design ({0})")]
    RankDeficient(String),
    #[error("numerics: dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("numerics: invalid input: {0}")]
    InvalidInput(String),

    // estimators
    #[error("estimators: positivity violation in {0}")]
    PositivityViolation(String),
    #[error("estimators: model `{model}` failed: {detail}")]
    ModelFailure { model: String, detail: String },
    #[error("estimators: specification mismatch: {0}")]
    SpecMismatch(String),
    #[error("estimators: no records in {0}")]
    EmptyGroup(String),
    #[error("estimators: required subset {0} is empty")]
    EmptyStage(String),

    // sampling_design
    #[error("sampling_design: all fractions are zero")]
    DegenerateFractions,
    #[error("sampling_design: invalid sizes: {0}")]
    InvalidSizes(String),

    // oracle_sim
    #[error("oracle_sim: invalid DAG: {0}")]
    BadDag(String),
    #[error("oracle_sim: no donors in conditioning cell {0}")]
    EmptyConditioningCell(String),
    #[error("oracle_sim: empty cell {0}")]
    EmptyCell(String),

    // inference
    #[error("inference: at least 2 clusters required, found {0}")]
    TooFewClusters(usize),
    #[error("inference: {failed} of {total} bootstrap replicates failed")]
    ReplicateFailure { failed: usize, total: usize },
    #[error("inference: invalid configuration: {0}")]
    InvalidInference(String),
}

impl Error {
    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) | DuplicateKey(..) | BadValue { .. } | MissingValue { .. } | InvalidSpec(_) => {
                "data_model"
            }
            UnknownVariable(_) | NotAnnotated | EmptyStandard => "emulation",
            BadKnots | SeparationDetected(_) | RankDeficient(_) | DimensionMismatch { .. } | InvalidInput(_) => {
                "numerics"
            }
            PositivityViolation(_) | ModelFailure { .. } | SpecMismatch(_) | EmptyGroup(_) | EmptyStage(_) => {
                "estimators"
            }
            DegenerateFractions | InvalidSizes(_) => "sampling_design",
            BadDag(_) | EmptyConditioningCell(_) | EmptyCell(_) => "oracle_sim",
            TooFewClusters(_) | ReplicateFailure { .. } | InvalidInference(_) => "inference",
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) => "MissingColumn",
            DuplicateKey(..) => "DuplicateKey",
            BadValue { .. } => "BadValue",
            MissingValue { .. } => "MissingValue",
            InvalidSpec(_) => "InvalidSpec",
            UnknownVariable(_) => "UnknownVariable",
            NotAnnotated => "NotAnnotated",
            EmptyStandard => "EmptyStandard",
            BadKnots => "BadKnots",
            SeparationDetected(_) => "SeparationDetected",
            RankDeficient(_) => "RankDeficient",
            DimensionMismatch { .. } => "DimensionMismatch",
            InvalidInput(_) => "InvalidInput",
            PositivityViolation(_) => "PositivityViolation",
            ModelFailure { .. } => "ModelFailure",
            SpecMismatch(_) => "SpecMismatch",
            EmptyGroup(_) => "EmptyGroup",
            EmptyStage(_) => "EmptyStage",
            DegenerateFractions => "DegenerateFractions",
            InvalidSizes(_) => "InvalidSizes",
            BadDag(_) => "BadDag",
            EmptyConditioningCell(_) => "EmptyConditioningCell",
            EmptyCell(_) => "EmptyCell",
            TooFewClusters(_) => "TooFewClusters",
            ReplicateFailure { .. } => "ReplicateFailure",
            InvalidInference(_) => "InvalidInference",
        }
    }
}
