//! Polygonal cellular decompositions: infinite tilings, their balls and
//! prefix exhaustions, and the finite truncations the flow runs on.

mod balls;
mod complex;
mod tiling;

use thiserror::Error;

pub use balls::{generate_tiling, BallSequence, FaceEnumeration, PrefixSequence};
pub use complex::{load_complex, read_complex, Complex, ComplexDocument};
pub use tiling::{HexagonalTessellation, Site, SquareGrid, TilingKind, TilingProvider, TriangularLattice};

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("unknown tiling kind `{0}` (expected square, tri or hex)")]
    UnknownTiling(String),
    #[error("face {face} has only {len} vertices")]
    FaceTooSmall { face: usize, len: usize },
    #[error("face {face} repeats vertex {vertex}")]
    RepeatedVertex { face: usize, vertex: u64 },
    #[error("double edge between vertices {0} and {1}")]
    DoubleEdge(u64, u64),
    #[error("interior vertex {vertex} meets only {degree} edges")]
    DegreeTooLow { vertex: u64, degree: usize },
    #[error("vertex id {0} listed twice")]
    DuplicateVertexId(u64),
    #[error("unknown vertex id {0}")]
    UnknownVertex(u64),
    #[error("insufficient exhaustion depth: need {needed}, explored {explored}")]
    InsufficientDepth { needed: usize, explored: usize },
    #[error("malformed complex: {0}")]
    Malformed(String),
    #[error("invalid complex document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
