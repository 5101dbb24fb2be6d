use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("observation {id} is missing field `{field}` required by {kind} bias")]
    MissingField {
        id: usize,
        field: &'static str,
        kind: &'static str,
    },
    #[error("observation {id} has a non-finite embedding coordinate")]
    NonFinite { id: usize },
    #[error("invalid bias specification: {0}")]
    InvalidSpec(String),
    #[error("row {row} (source {source_index}, observation {id}) lies outside every biasing support")]
    UnsupportedObservation {
        row: usize,
        source_index: usize,
        id: usize,
    },
    #[error("row {row} of the omega matrix has no positive entry")]
    AllZeroRow { row: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("class {class} has an empty pool")]
    EmptyClassPool { class: usize },
    #[error("modality {modality} has an empty pool")]
    EmptyModalityPool { modality: usize },
    #[error("degenerate population: coordinate {coordinate} is constant")]
    DegeneratePopulation { coordinate: usize },
    #[error("observation {id} has no label")]
    UnlabeledObservation { id: usize },
    #[error("observation {id} has no embedding")]
    MissingEmbedding { id: usize },
    #[error("solver diverged at iteration {iteration} (objective {objective})")]
    Diverged { iteration: usize, objective: f64 },
    #[error("overlap graph is not strongly connected; components: {components:?}")]
    NotConnected { components: Vec<Vec<usize>> },
    #[error("normalizer estimate {index} is not positive ({value})")]
    NonPositiveW { index: usize, value: f64 },
    #[error("observation {id} is missing the {key} key")]
    MissingKey { id: usize, key: &'static str },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("normalizer of source {index} is zero")]
    ZeroNormalizer { index: usize },
    #[error("no closed form for shapes alpha={alpha}, beta={beta}")]
    UnsupportedShapes { alpha: f64, beta: f64 },
    #[error("weights are not aligned with the dataset: {0}")]
    MisalignedWeights(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error is a numerical failure of the solver rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NotConnected { .. } | Error::NonPositiveW { .. }
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::UnsupportedShapes { .. }
        )
    }
}
