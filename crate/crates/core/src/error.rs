use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("no Itakura path links (1,1) to ({weights},{window}) for filter length {weights} and window length {window}")]
    Infeasible { weights: usize, window: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("batch norm running statistics used before any training update")]
    Uninitialized,
    #[error("training diverged at iteration {iteration}: non-finite gradient in {layer}")]
    Diverged { layer: String, iteration: usize },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty {0}")]
    Empty(String),
    #[error("invalid {0}")]
    Invalid(String),
    #[error("{what} = {value} exceeds the supported range (max {max})")]
    Range {
        what: &'static str,
        value: usize,
        max: usize,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
