use thiserror::Error;

pub type Result<T, E = TermdpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TermdpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The cost fit stopped before reaching its tolerance.
    #[error("MLE did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e}){}", context_suffix(.context))]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
        context: Option<String>,
    },

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("instance too large: {leaves} leaves exceeds the enumeration cap of {cap}")]
    InstanceTooLarge { leaves: u64, cap: u64 },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" [{c}]"),
        None => String::new(),
    }
}

impl TermdpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TermdpError::InvalidArgument(msg.into())
    }

    /// Attaches where a convergence failure happened (episode, ensemble member).
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            TermdpError::Convergence {
                iterations,
                gradient_norm,
                last_iterate,
                context,
            } => {
                let ctx = ctx.into();
                let context = Some(match context {
                    Some(inner) => format!("{ctx}; {inner}"),
                    None => ctx,
                });
                TermdpError::Convergence {
                    iterations,
                    gradient_norm,
                    last_iterate,
                    context,
                }
            }
            other => other,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            TermdpError::Convergence { .. } | TermdpError::NumericFailure(_) => 3,
            TermdpError::InstanceTooLarge { .. } => 4,
            _ => 2,
        }
    }
}
