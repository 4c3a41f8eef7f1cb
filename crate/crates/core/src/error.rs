use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: String, detail: String },

    #[error(
        "separation detected (max |coefficient| = {max_abs_coef:.3}); \
         the MLE does not exist, refit with Firth's correction enabled"
    )]
    Separation { max_abs_coef: f64 },

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("residual variance is zero: the mediator is an exact linear function of the exposure")]
    DegenerateResidual,

    #[error("outcome has a single class; logistic regression needs both 0 and 1")]
    SingleClass,

    #[error("no closed form for link {link} with {error} errors")]
    UnsupportedCombination { link: String, error: String },

    #[error("operation requires no exposure-mediator interaction, got beta_xw = {0}")]
    InteractionPresent(f64),

    #[error("covariance matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    SingularCovariance(f64),

    #[error("{failed} of {total} replicates failed (limit {limit_pct}%)")]
    TooManyFailures { failed: usize, total: usize, limit_pct: u32 },

    #[error("direct and indirect effects differ in sign (NDE={nde}, NIE={nie}); proportion mediated undefined")]
    SignMismatch { nde: f64, nie: f64 },

    #[error("residual-variance term 1 - rho^2 sigma_x^2 = {0} is negative")]
    InvalidVarianceTerm(f64),
}
