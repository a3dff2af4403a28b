use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset at row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{name} = {value} is out of range ({allowed})")]
    OutOfRange {
        name: &'static str,
        value: String,
        allowed: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rows without individual_id: {rows:?}")]
    MissingIndividual { rows: Vec<usize> },

    #[error("need at least {needed} individuals, found {found}")]
    TooFewIndividuals { needed: usize, found: usize },

    #[error("split {0} is empty")]
    EmptySplit(&'static str),

    #[error("{0} is undefined: no individuals in its class")]
    UndefinedMetric(&'static str),

    #[error("{0}")]
    InvalidEvaluation(String),

    #[error("empty input")]
    EmptyInput,

    #[error("need ≥ 2 species, found {found}")]
    SingleSpecies { found: usize },

    #[error("empty candidate grid")]
    EmptyGrid,

    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },

    #[error("no valid validation triplets: the validation split needs >= 2 individuals, one with >= 2 images")]
    NoValidationTriplets,

    #[error("train and validation individuals overlap: {0:?}")]
    OverlappingSplits(Vec<String>),
}

impl Error {
    pub(crate) fn out_of_range(
        name: &'static str,
        value: impl core::fmt::Display,
        allowed: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::OutOfRange {
            name,
            value: value.to_string(),
            allowed: allowed.to_string(),
        }
    }
}
