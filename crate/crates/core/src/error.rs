use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no lattice site lies strictly inside the domain at this mesh")]
    DomainTooSmall,
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("not a boundary edge of the domain: {0}")]
    NotBoundaryEdge(String),
    #[error("unknown marked point label `{0}`")]
    UnknownLabel(String),
    #[error("marked points `{0}` and `{1}` resolve to the same boundary edge")]
    SameMarkedEdge(String, String),
    #[error("coloring carries no boundary condition for the requested endpoints")]
    NoBoundaryCondition,
    #[error("time per edge must be positive, got {0}")]
    NonPositiveXi(f64),
    #[error("quad is not contained in the domain")]
    QuadOutsideDomain,
    #[error("marked points collide at this mesh: {0}")]
    MarkedEdgeCollision(String),
    #[error("annulus is not contained in the domain")]
    AnnulusOutsideDomain,
    #[error("invalid annulus: {0}")]
    InvalidAnnulus(String),
    #[error("unsupported arm pattern: {0}")]
    UnsupportedPattern(String),
    #[error("box is not contained in the domain")]
    BoxOutsideDomain,
    #[error("shape is empty")]
    EmptyShape,
    #[error("not dyadic: {0}")]
    NotDyadic(String),
    #[error("epsilon {epsilon} is not smaller than the clearance {clearance} to the domain boundary")]
    EpsilonTooLarge { epsilon: f64, clearance: f64 },
    #[error("no trial satisfied the conditioning event")]
    NoHits,
    #[error("polyline has no time parametrization")]
    MissingTimes,
    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),
    #[error("estimate at scale {0} is not positive")]
    NonPositiveEstimate(f64),
    #[error("fit needs at least 3 rows, got {0}")]
    TooFewPoints(usize),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("run stopped after {0} new chunks; rerun to resume")]
    Interrupted(usize),
    #[error("interface tracing failed: {0}")]
    Trace(String),
    #[error("malformed fixture: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
