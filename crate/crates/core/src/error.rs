use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch on {axis} axis: expected {expected}, found {found}")]
    Shape {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("value {value} lies outside the support of the distribution ({context})")]
    OutOfSupport { value: f64, context: String },

    #[error("copula parameter {theta} outside the admissible range of the {family} family")]
    ParameterDomain { family: String, theta: f64 },

    #[error("non-finite log-likelihood at MCMC iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },

    #[error("non-finite copula log-density at t = {t}")]
    NonFiniteTerm { t: usize },

    #[error("zero or negative variance draw at index {draw}")]
    ZeroVariance { draw: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge after {evaluations} evaluations (best objective {best_value})")]
    NonConvergence {
        evaluations: usize,
        best_value: f64,
        best_params: Vec<f64>,
    },

    #[error("posterior has no retained draws")]
    EmptyPosterior,

    #[error("{discarded} of {total} forecast paths were non-finite (budget 1%)")]
    TooManyDiscards { discarded: usize, total: usize },

    #[error("region {region}: {source}")]
    Region {
        region: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of numerical origin (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Stage { source, .. } | Error::Region { source, .. } => source.is_numeric(),
            Error::Shape { .. } | Error::Precondition(_) => false,
            _ => true,
        }
    }
}
