use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error in {element}: {reason}")]
    Validation { element: String, reason: String },
    #[error("invalid filter window {0}: must be odd and positive")]
    InvalidWindow(usize),
    #[error("trajectory {id} has {len} samples, at least 3 are required")]
    TooShort { id: String, len: usize },
    #[error("trajectory {trajectory_id} belongs to store {track_store}, layout is {layout_store}")]
    FrameMismatch {
        trajectory_id: String,
        track_store: String,
        layout_store: String,
    },
    #[error("invalid stop parameters: {0}")]
    InvalidParams(String),
    #[error("unknown shelf {shelf_id} (layout has {n_shelves} shelves)")]
    UnknownShelf { shelf_id: usize, n_shelves: usize },
    #[error("unknown trajectory {0}")]
    UnknownTrajectory(String),
    #[error("labels reference {found} distinct reviewers but the panel has {n_l}")]
    ReviewerCountMismatch { found: usize, n_l: usize },
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parameter grid is empty: {0}")]
    EmptyGrid(String),
    #[error("fraction {0} is out of range")]
    FractionOutOfRange(f64),
    #[error("degenerate split: {train} calibration and {test} evaluation trajectories")]
    DegenerateSplit { train: usize, test: usize },
    #[error("shelf {shelf_id} out of range 1..={n_shelves}")]
    ShelfOutOfRange { shelf_id: usize, n_shelves: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("inconsistent population: {0}")]
    InconsistentPopulation(String),
    #[error("infeasible script: {0}")]
    InfeasibleScript(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(element: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            element: element.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse(_) => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::InvalidWindow(_) => "InvalidWindow",
            Error::TooShort { .. } => "TooShort",
            Error::FrameMismatch { .. } => "FrameMismatch",
            Error::InvalidParams(_) => "InvalidParams",
            Error::UnknownShelf { .. } => "UnknownShelf",
            Error::UnknownTrajectory(_) => "UnknownTrajectory",
            Error::ReviewerCountMismatch { .. } => "ReviewerCountMismatch",
            Error::AxisMismatch(_) => "AxisMismatch",
            Error::EmptyDataset => "EmptyDataset",
            Error::EmptyGrid(_) => "EmptyGrid",
            Error::FractionOutOfRange(_) => "FractionOutOfRange",
            Error::DegenerateSplit { .. } => "DegenerateSplit",
            Error::ShelfOutOfRange { .. } => "ShelfOutOfRange",
            Error::EmptyInput => "EmptyInput",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InconsistentPopulation(_) => "InconsistentPopulation",
            Error::InfeasibleScript(_) => "InfeasibleScript",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
