use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("lattice is empty: no node of spacing {spacing} lies in the domain")]
    EmptyLattice { spacing: f64 },

    #[error("field and {what} were built from different lattices")]
    LatticeMismatch { what: &'static str },

    #[error("non-finite sample at node {index:?}")]
    NonFiniteSample { index: [i64; 3] },

    #[error("point {0:?} lies outside the domain bounding box")]
    OutsideDomain([f64; 3]),

    #[error("point {0:?} is out of reach of the lattice (Φ_n = 0)")]
    OutOfReach([f64; 3]),

    #[error("degenerate tetrahedron {0}")]
    DegenerateTet(usize),

    #[error("gradient unavailable: the field has no analytic gradient and no finite-difference step was set")]
    GradientUnavailable,

    #[error("rasterization grid is coarser than the lattice (cell {cell} > spacing {spacing})")]
    Undersampled { cell: f64, spacing: f64 },

    #[error("direct demag solver refused: {cells} cells exceeds budget {budget}")]
    CellBudgetExceeded { cells: usize, budget: usize },

    #[error("hypothesis check failed at n = {n}: {detail}")]
    HypothesisFailed { n: usize, detail: String },

    #[error("parse error: {0}")]
    Parse(String),
}
