use thiserror::Error;

use crate::geometry::Space;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ambient space mismatch: {0:?} vs {1:?}")]
    SpaceMismatch(Space, Space),

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("point {0:?} is not in the domain")]
    NotInDomain([f64; 2]),

    #[error("map is not invertible at grid resolution: {0}")]
    NotInvertible(String),

    #[error("decomposition is not meagre: plaque {plaque} contains the grid disk centred at {center:?}")]
    NotMeagre { plaque: usize, center: [f64; 2] },

    #[error("set is not closed at resolution: {missing} boundary grid points missing")]
    NotClosed { missing: usize },

    #[error("region is not contained in the decomposition domain ({outside} points outside)")]
    NotSubset { outside: usize },

    #[error("decomposition is not upper semicontinuous at resolution: plaque {plaque} at {point:?} is farther than {modulus} from neighbouring plaque {neighbour}")]
    NotSemicontinuous {
        plaque: usize,
        neighbour: usize,
        point: [f64; 2],
        modulus: f64,
    },

    #[error("arc perturbation budget exhausted; {} offending intervals remain", remaining.len())]
    BudgetExhausted { remaining: Vec<(f64, f64)> },

    #[error("cell boundary transversalization failed for cells {cells:?}")]
    CellBudgetExhausted { cells: Vec<(i64, i64)> },

    #[error("partition is not invariant: class {class} image straddles by {straddle} (tolerance {tolerance})")]
    InvarianceViolation {
        class: usize,
        straddle: f64,
        tolerance: f64,
    },

    #[error("no alpha in the sweep reached mesh < {epsilon}")]
    MeshNotAchieved { epsilon: f64 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
