use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported dimension {0}: this crate implements d in 1..=3")]
    UnsupportedDimension(usize),

    #[error("degenerate simplex: affinely dependent vertex set")]
    DegenerateSimplex,

    #[error("weighted points {0} and {1} have overlapping balls")]
    OverlappingBalls(usize, usize),

    #[error("scale invariant violated: need 20*M^2 < (L/4)^2, got M={m}, L={l}")]
    ScaleTooLargeForTorus { m: String, l: String },

    #[error("point set is not {0}-separated: witness pair ({1}, {2})")]
    NotSeparated(String, usize, usize),

    #[error("point set is not {0}-syndetic: empty ball witness at {1}")]
    NotSyndetic(String, String),

    #[error("weight outside admissible range [0, (M/3)^2] at point {0}")]
    InfeasibleWeight(usize),

    #[error("forbidden intervals cover the admissible weight range for point {0}")]
    WeightRangeExhausted(usize),

    #[error("sliver simplex survived weight assignment: {0:?}")]
    SliverFound(Vec<usize>),

    #[error("triangulation invariant violated: {0}")]
    TriangulationViolation(String),

    #[error("dual tessellation invariant violated: {0}")]
    TessellationViolation(String),

    #[error("capacity shortfall at level {level}: {detail}")]
    CapacityShortfall { level: usize, detail: String },

    #[error("aggregation violation: {0}")]
    AggregationViolation(String),

    #[error("count shortfall in boundary-set allocation: {0}")]
    CountShortfall(String),

    #[error("no admissible tuple for chain step: {0}")]
    NoAdmissibleTuple(String),

    #[error("no scale satisfies the refinement profile within the search bound: {0}")]
    ScaleSearchExhausted(String),

    #[error("oracle disagreement in {check}: {detail}")]
    OracleDisagreement { check: String, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
