use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not positive-definite at grid point {point}")]
    NonSPDMetric { point: usize },
    #[error("grid resolution {0} must be even and at least 4")]
    BadGrid(usize),
    #[error("invalid torus: {0}")]
    BadTorus(String),
    #[error("degree mismatch: expected {expected}, got ({p},{q})")]
    DegreeMismatch { expected: String, p: usize, q: usize },
    #[error("operator would exceed top degree (p={p}, q={q}, n={n})")]
    TopDegree { p: usize, q: usize, n: usize },
    #[error("wedge product degree overflow: ({p},{q}) exceeds n={n}")]
    DegreeOverflow { p: usize, q: usize, n: usize },
    #[error("value shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("monodromy matrices {0} and {1} do not commute")]
    NonCommutingMonodromy(usize, usize),
    #[error("Higgs field component {higgs} is not equivariant under monodromy {monodromy}")]
    HiggsNotFlat { higgs: usize, monodromy: usize },
    #[error("Higgs field components {0} and {1} do not commute (phi ^ phi != 0)")]
    HiggsWedgeNonzero(usize, usize),
    #[error("monodromy {0} has an eigenvalue on the closed negative real axis")]
    NoPrincipalLog(usize),
    #[error("inconsistent bundle data: {0}")]
    BadBundle(String),
    #[error("rank mismatch: bundle rank {bundle}, metric rank {metric}")]
    RankMismatch { bundle: usize, metric: usize },
    #[error("metric is not Hermitian positive-definite at grid point {point} (min eigenvalue {min_eig:e})")]
    NotPositive { point: usize, min_eig: f64 },
    #[error("integral of omega^n / nu is not positive ({0:e})")]
    ZeroVolume(f64),
    #[error("metric is not astheno-Kaehler (defect {0:e})")]
    NotAstheno(f64),
    #[error("subspace is not invariant (residual {0:e})")]
    NotInvariant(f64),
    #[error("background normalization failed: {0}")]
    UnsolvableNormalization(String),
    #[error("Newton stalled at eps = {eps:e} (residual {residual:e}): {reason}")]
    Stalled { eps: f64, residual: f64, reason: String },
    #[error("limit spectrum has no gap around 1/2: {0}")]
    NoSpectralGap(String),
    #[error("solver trace did not end in blow-up")]
    NoBlowup,
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
