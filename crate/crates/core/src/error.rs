use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// Variants are grouped by the subsystem that raises them; [`Error::exit_code`]
/// maps each group onto the CLI exit-code contract.
#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("design matrix is rank deficient (numerical rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("need n > p + 1 rows, got n = {n}, p = {p}")]
    TooFewRows { n: usize, p: usize },
    #[error("sphere draw degenerated after {attempts} attempts")]
    DegenerateDraw { attempts: usize },
    #[error("tangent space collapsed onto the column space (singular value {value:e})")]
    DegenerateTangent { value: f64 },
    #[error("vector {index} is linearly dependent on its predecessors")]
    LinearlyDependent { index: usize },

    // estimators
    #[error("efficiency {efficiency} is not attainable for this family")]
    NoBracket { efficiency: f64 },
    #[error("estimating equations did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("scale estimate collapsed to zero")]
    ZeroScale,
    #[error("implicit-differentiation system is singular (condition number {condition:e})")]
    SingularImplicitSystem { condition: f64 },

    // sampler
    #[error("h-transform postcondition violated: statistic deviates by {deviation:e}")]
    PostConditionViolated { deviation: f64 },
    #[error("projection onto the orthogonal complement vanished")]
    DegenerateProjection,
    #[error("sphere normal and scale-gradient normal are nearly orthogonal (|cos| = {cos:e})")]
    NearTangentDegeneracy { cos: f64 },
    #[error("posterior precision is not positive definite")]
    NumericalPD,
    #[error("hierarchical posterior needs at least 3 groups, got {groups}")]
    ImproperPosterior { groups: usize },
    #[error("{count} consecutive proposals failed; last failure: {last}")]
    TooManyFailedProposals { count: usize, last: String },

    // evaluation
    #[error("need at least {required} posterior draws, got {got}")]
    TooFewDraws { required: usize, got: usize },
    #[error("adaptive quadrature failed to reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },
    #[error("trimming {trimmed} of {total} cases leaves nothing to score")]
    EmptyAfterTrim { trimmed: usize, total: usize },
    #[error("stratum {stratum} has {size} cases; at least 2 are required")]
    StratumTooSmall { stratum: String, size: usize },

    // io
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: String },
    #[error("embedded dataset {name} failed its checksum")]
    ChecksumMismatch { name: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("selftest failed: {0}")]
    SelfTestFailed(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code used by the command-line tool: 2 configuration, 3 numerical,
    /// 4 input/output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidInput(_)
            | Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::NonFiniteValue { .. }
            | Error::StratumTooSmall { .. }
            | Error::TooFewRows { .. }
            | Error::ImproperPosterior { .. }
            | Error::NoBracket { .. } => 2,
            Error::Io(_) | Error::ChecksumMismatch { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
