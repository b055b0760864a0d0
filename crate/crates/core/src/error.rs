use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bounds have zero or negative extent along the {axis} axis")]
    DegenerateBounds { axis: char },

    #[error("points coincide ({0})")]
    CoincidentPoints(&'static str),

    #[error("grid index ({i}, {j}, {k}) outside lattice {dims:?}")]
    IndexOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        dims: [usize; 3],
    },

    #[error("measured locations {0} and {1} coincide")]
    DuplicatePoint(usize, usize),

    #[error("Kriging system is singular")]
    SingularSystem,

    #[error("{what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("grids {a:?} and {b:?} are not lattice-adjacent")]
    NotAdjacent { a: [usize; 3], b: [usize; 3] },

    #[error("lattice graph contains a negative cycle; use the prize_greedy mode or reduce |mu2|")]
    NegativeCycle,

    #[error("lattice has {vertices} vertices, Floyd mode is limited to {limit}")]
    LatticeTooLarge { vertices: usize, limit: usize },

    #[error("only {available} unmeasured candidates inside the corridor, need {needed}")]
    InsufficientCandidates { available: usize, needed: usize },

    #[error("no feasible path from start to end")]
    NoPath,

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
