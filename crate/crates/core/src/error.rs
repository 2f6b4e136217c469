use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown wire label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate wire label `{0}`")]
    DuplicateLabel(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("Kraus family is trace increasing (excess {excess:e})")]
    TraceIncreasing { excess: f64 },
    #[error("label collision between unshared wires: `{0}`")]
    LabelCollision(String),
    #[error("memory wire mismatch: {0}")]
    MemoryMismatch(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("dilations have different marginals (deviation {deviation:e})")]
    MarginalMismatch { deviation: f64 },
    #[error("tester operator is zero")]
    ZeroTester,
    #[error("tester set is empty")]
    EmptyTesterSet,
    #[error("every tester gives a zero denominator")]
    AllDenominatorsZero,
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("total dimension {required} exceeds cap {cap}")]
    DimensionCap { required: usize, cap: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
