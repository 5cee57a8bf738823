use thiserror::Error;

#[derive(Debug, Error)]
pub enum QdagError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("degenerate covariate {0}: all values are equal")]
    DegenerateCovariate(usize),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("graph contains a cycle through nodes {0:?}")]
    Cycle(Vec<usize>),
    #[error("no permutation within {tol} of Kendall tau {target} for p = {p}")]
    OrderingSearch { target: f64, tol: f64, p: usize },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("empty posterior archive")]
    EmptyArchive,
    #[error("undefined rate: {0}")]
    UndefinedRate(String),
    #[error("archive format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QdagError>;
