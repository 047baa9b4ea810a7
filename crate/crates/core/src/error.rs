use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector norm below 1e-12")]
    ZeroVector,
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("invalid camera specification: {0}")]
    InvalidCamera(String),
    #[error("normalized coordinate ({0}, {1}) outside (0,1)")]
    OutOfDomain(f64, f64),
    #[error("spherical harmonic order |m| = {m} exceeds degree l = {l}")]
    InvalidOrder { l: i32, m: i32 },
    #[error("expected {expected} SH coefficient vectors, got {got}")]
    CoefficientMismatch { expected: usize, got: usize },
    #[error("design matrix rank {rank} below basis size {basis}")]
    RankDeficient { rank: usize, basis: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pointmap has no valid pixels")]
    EmptyPointmap,
    #[error("edges {0} are not a reciprocal pair")]
    NotReciprocal(String),
    #[error("invalid scene graph: {0}")]
    InvalidGraph(String),
    #[error("view {0} has no incident edges")]
    IsolatedView(u32),
    #[error("view {0} has no valid pixels across its incident edges")]
    NoValidPixels(u32),
    #[error("scene graph is empty")]
    EmptyGraph,
    #[error("scene graph is disconnected: view {0} unreachable from the anchor")]
    Disconnected(u32),
    #[error("non-finite objective in stage {stage} at iteration {iteration}")]
    NonFinite { stage: String, iteration: usize },
    #[error("ray from view {view} pixel {pixel} escapes the scene")]
    RayEscapes { view: u32, pixel: usize },
    #[error("empty list")]
    EmptyList,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
