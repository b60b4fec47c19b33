use thiserror::Error;

/// Everything that can go wrong between sampling a graph and scoring an assignment.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("block matrix is not symmetric (entry ({row}, {col}))")]
    NonSymmetric { row: usize, col: usize },
    #[error("block matrix has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },
    #[error("prior is not a probability vector with positive entries")]
    NotSimplex,
    #[error("degree normalization violated: |M pi - 1|_inf = {residual:e}")]
    NormalizationViolated { residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("transition matrix has no usable second eigenvalue (lambda2 = {lambda2})")]
    DegenerateSpectrum { lambda2: f64 },
    #[error("edge probability {p} exceeds 1")]
    ProbabilityOverflow { p: f64 },
    #[error("closed form of p is singular at lambda^2 d = 1")]
    SeriesSingularity,
    #[error("no (delta, ell) in the search grid makes p(lambda2) negative")]
    NoFeasibleParams,
    #[error("model is not above the Kesten-Stigum threshold (lambda2^2 d - 1 = {eps})")]
    BelowKs { eps: f64 },
    #[error("walk enumeration oracle refused: n = {n}, ell = {ell}")]
    OracleTooLarge { n: usize, ell: usize },
    #[error("eigensolver did not converge ({converged} of {requested} pairs)")]
    NoConvergence { converged: usize, requested: usize },
    #[error("shift {shift} collides with an eigenvalue")]
    SingularShift { shift: f64 },
    #[error("dense routine refused: n = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("corruption budget {budget} is too small (need at least {min})")]
    BudgetTooSmall { budget: usize, min: usize },
    #[error("only {available} legal monotone moves for a budget of {budget}")]
    ExhaustedMoves { available: usize, budget: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("trimming loop exceeded {cap} iterations")]
    IterationCapExceeded { cap: usize },
    #[error("recovered subspace is empty")]
    EmptySubspace,
    #[error("subspace of dimension {dim} cannot host {wanted} directions")]
    DimensionTooSmall { dim: usize, wanted: usize },
    #[error("community embedding hull is degenerate")]
    HullDegenerate,
    #[error("Psi-projection has zero norm")]
    ZeroNorm,
    #[error("community {0} is empty")]
    EmptyCommunity(usize),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
