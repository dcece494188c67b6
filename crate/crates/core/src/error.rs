use thiserror::Error;

/// Errors produced by the accounting, distortion and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error in {function}: {message}")]
    Domain { function: &'static str, message: String },

    /// A value failed a type invariant at construction time.
    #[error("invalid {field}: {message}")]
    InvalidParameter { field: &'static str, message: String },

    /// The Gamma seed's moment generating function does not exist at an
    /// argument the accountant needs (`t * theta >= 1`).
    #[error(
        "MGF of the Gamma seed undefined at t*theta = {t_theta} (>= 1); \
         largest admissible lambda_max is {max_lambda}"
    )]
    MgfDomainViolation { t_theta: f64, max_lambda: u64 },

    #[error("quadrature did not converge after {panels} panels (integrand may not be integrable)")]
    NonConvergence { panels: usize },

    #[error("negative discriminant {discriminant}: the k interval is empty")]
    NegativeDiscriminant { discriminant: f64 },

    /// No point of the search box satisfies every constraint.
    #[error("no feasible point: {diagnosis}")]
    Infeasible { diagnosis: String },
}

impl Error {
    pub(crate) fn domain(function: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            function,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
