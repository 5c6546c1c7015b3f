use thiserror::Error;

/// Errors produced by geometry validation, lane permutations, field and
/// kernel operations, and the benchmark harness.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("lattice must have at least one dimension and positive extents, got {0:?}")]
    InvalidGeometry(Vec<usize>),
    #[error("layout entry {value} in dimension {dim} is not a power of two")]
    NonPowerOfTwoLane { dim: usize, value: usize },
    #[error("layout entry {lanes} does not divide extent {extent} in dimension {dim}")]
    LaneExceedsExtent {
        dim: usize,
        lanes: usize,
        extent: usize,
    },
    #[error("layout has {layout} entries but the lattice has {dims} dimensions")]
    DimensionMismatch { dims: usize, layout: usize },
    #[error("coordinate {coord:?} outside lattice {extents:?}")]
    CoordOutOfRange {
        coord: Vec<usize>,
        extents: Vec<usize>,
    },
    #[error("outer index {outer} / lane {lane} outside {outer_volume} x {lanes}")]
    IndexOutOfRange {
        outer: usize,
        lane: usize,
        outer_volume: usize,
        lanes: usize,
    },
    #[error("dimension {dim} out of range for a {dims}-dimensional lattice")]
    DimOutOfRange { dim: usize, dims: usize },
    #[error("split count {s} does not evenly divide {len} elements of kind {kind}")]
    InvalidSplit {
        s: usize,
        len: usize,
        kind: &'static str,
    },
    #[error("rotation {r} is odd for a complex array")]
    OddComplexRotation { r: isize },
    #[error("permute level {level} invalid for {len} elements of kind {kind}")]
    InvalidLevel {
        level: usize,
        len: usize,
        kind: &'static str,
    },
    #[error("array of {len} elements of kind {kind} is not a 128 x 2^k bit vector")]
    UnsupportedVectorWidth { len: usize, kind: &'static str },
    #[error("scalar kind {kind} does not match the storage precision of {bytes} bytes")]
    KindMismatch { kind: &'static str, bytes: usize },
    #[error("permute shifts need every layout entry <= 2, layout is {0:?}")]
    PermuteUnsupported(Vec<usize>),
    #[error("operands disagree in shape: {0}")]
    ShapeMismatch(String),
    #[error("operator needs a 4-dimensional lattice, got {0} dimensions")]
    DimensionNotFour(usize),
    #[error("cannot allocate {0} scalars")]
    Allocation(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code used in CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "invalid_geometry",
            Error::NonPowerOfTwoLane { .. } => "non_power_of_two_lane",
            Error::LaneExceedsExtent { .. } => "lane_exceeds_extent",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::CoordOutOfRange { .. } => "coord_out_of_range",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::DimOutOfRange { .. } => "dim_out_of_range",
            Error::InvalidSplit { .. } => "invalid_split",
            Error::OddComplexRotation { .. } => "odd_complex_rotation",
            Error::InvalidLevel { .. } => "invalid_level",
            Error::UnsupportedVectorWidth { .. } => "unsupported_vector_width",
            Error::KindMismatch { .. } => "kind_mismatch",
            Error::PermuteUnsupported(_) => "permute_unsupported",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::DimensionNotFour(_) => "dimension_not_four",
            Error::Allocation(_) => "allocation",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
