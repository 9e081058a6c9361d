use thiserror::Error;

/// Which of the two samples an index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSide {
    /// The sample drawn from the denominator distribution P.
    X,
    /// The sample drawn from the numerator distribution Q.
    Y,
}

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    #[error("invalid parameter: {context}")]
    InvalidParameter { context: String },

    /// Cholesky factorization hit a non-positive pivot; the matrix is not
    /// positive definite within working tolerance.
    #[error("factorization failed at pivot {pivot}: matrix not positive definite")]
    Singular { pivot: usize },

    #[error("degenerate bandwidth: median pairwise distance is zero")]
    DegenerateBandwidth,

    /// A loss with a restricted domain (e.g. the Kullback-Leibler conjugate)
    /// was evaluated at a coefficient vector whose induced value at one of
    /// the sample points falls outside that domain.
    #[error("psi domain violated at {side:?}[{index}]: w = {value}")]
    PsiDomain {
        side: SampleSide,
        index: usize,
        value: f64,
    },

    #[error("objective is not finite at the starting point")]
    InfeasibleStart,

    #[error("gradient check: every probe point was infeasible")]
    AllProbesInfeasible,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(context: impl Into<String>) -> Self {
        Error::InvalidParameter {
            context: context.into(),
        }
    }
}
