use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] softpmd::Error),
    /// A library error raised while computing outer iteration `t`.
    #[error("iteration {t}: {source}")]
    Iteration {
        t: usize,
        #[source]
        source: softpmd::Error,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attaches the iteration index to library errors.
pub(crate) trait AtIteration<V> {
    fn at(self, t: usize) -> Result<V>;
}

impl<V> AtIteration<V> for std::result::Result<V, softpmd::Error> {
    fn at(self, t: usize) -> Result<V> {
        self.map_err(|source| HarnessError::Iteration { t, source })
    }
}
