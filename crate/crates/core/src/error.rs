use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no finite log-weight: probability mass is empty")]
    EmptyMass,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("model `{0}` has no analytic posterior or evidence")]
    NoAnalyticEvidence(&'static str),

    #[error("particle collapse at stage {stage} (temperature {temperature}): every weight is zero")]
    ParticleCollapse { stage: usize, temperature: f64 },

    #[error("particle collapse for datapoint {datapoint}: {source}")]
    DatapointCollapse {
        datapoint: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sampler store for datapoint {0} is empty")]
    EmptyStore(usize),

    #[error("estimator `{estimator}` is not available for store mode `{mode}`")]
    WrongStoreMode { estimator: &'static str, mode: &'static str },

    #[error("gradient has non-finite entries; step rejected")]
    NonFiniteGradient,

    #[error("importance-sampling gradient undefined: every particle has zero joint density")]
    UndefinedGradient,

    #[error("invalid temperature schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
