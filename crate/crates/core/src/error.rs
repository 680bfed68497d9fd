use thiserror::Error;

/// Errors raised by lattice construction, the eigensolvers, the walk and
/// entropy routines, and the experiment runner.
#[derive(Debug, Error)]
pub enum MerwError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("site index {index} out of range for a lattice with {n_sites} sites")]
    SiteOutOfRange { index: usize, n_sites: usize },

    #[error("potential `{label}` is not finite at {point:?} (edge from site {site} along axis {axis})")]
    NonFinitePotential {
        label: String,
        site: usize,
        axis: usize,
        point: Vec<f64>,
    },

    #[error("step matrix has no nonzero entries")]
    EmptyMatrix,

    #[error("support of the step matrix is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense oracle refused: {sites} sites exceeds the limit of {limit}")]
    TooLargeForDense { sites: usize, limit: usize },

    #[error("requested {requested} eigenpairs but the support has only {available} sites")]
    TooManyPairs { requested: usize, available: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite amplitude at site {0}")]
    NonFiniteAmplitude(usize),

    #[error("amplitude reached the wall region (ratio {ratio:e} to peak)")]
    WallContact { ratio: f64 },

    #[error("negative amplitude {value:e} at site {site}")]
    NegativeAmplitude { site: usize, value: f64 },

    #[error("probability mass {mass:e} sits on undefined stochastic row {site}")]
    MassOnUndefinedRow { site: usize, mass: f64 },

    #[error("field has no weight on defined rows; a point-started field on a bipartite lattice must be parity-merged first")]
    NoDefinedWeight,

    #[error("mixture cannot be normalized: coefficient under the radical is {0}")]
    NormalizationImpossible(f64),

    #[error("node blocking left an empty domain")]
    EmptyDomain,

    #[error("k-step path ensemble has {paths} paths, limit is {limit}; use k * H instead")]
    MemoryGuard { paths: u128, limit: u128 },

    #[error("field `{0}` does not provide analytic derivatives")]
    NonSmooth(String),

    #[error("state carries mass {mass:e} within two sites of a potential singularity; soften the cutoff")]
    NearSingularity { mass: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MerwError>;
