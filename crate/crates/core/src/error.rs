use thiserror::Error;

/// Errors raised by every analysis in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("diagram is not acyclic (cycle through `{0}`)")]
    Cycle(String),
    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),
    #[error("this operation needs a compact diagram; run `compact` on the natural form first")]
    NaturalForm,
    #[error("this operation needs a natural diagram")]
    CompactForm,
    #[error("node `{0}` is not a bound outcome-delta node")]
    UnboundDelta(String),
    #[error("missing outcome-level node for baseline period {0}")]
    MissingBaseline(i64),
    #[error("cannot marginalize outcome-level node `{node}`: it has child `{child}`")]
    CompactRejected { node: String, child: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("failed to parse expression `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("no value for symbol `{0}`")]
    MissingSymbol(String),
    #[error("inadmissible assignment: node `{node}` has explained variance {explained} (needs < 1)")]
    Inadmissible { node: String, explained: f64 },
    #[error("covariance submatrix is singular or ill-conditioned (condition number {0:e})")]
    Singular(f64),
    #[error("trek enumeration exceeded the cap of {0} treks")]
    TrekOverflow(usize),
    #[error("candidate set has {size} nodes, above the exhaustive-search cap of {cap}")]
    Capacity { size: usize, cap: usize },
    #[error("no admissible assignment found after {0} draws")]
    NoAdmissible(usize),
    #[error("design matrix is rank deficient: column `{0}` is linearly dependent on earlier columns")]
    RankDeficient(String),
    #[error("design matrix has {rows} rows but {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("non-finite value in column `{0}`")]
    NonFinite(String),
    #[error("response has a single class")]
    OneClass,
    #[error("class {0} has no observations")]
    EmptyClass(usize),
    #[error("perfect separation detected (coefficient norm exceeded {0:e})")]
    Separation(f64),
    #[error("positivity violated: fitted propensity {0} outside (1e-6, 1 - 1e-6)")]
    Positivity(f64),
    #[error("{kind}: {source}")]
    Estimator {
        kind: String,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` already exists")]
    NameCollision(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cancelled")]
    Cancelled,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
