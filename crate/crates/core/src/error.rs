use thiserror::Error;

#[derive(Debug, Error)]
pub enum GdgnnError {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("edge endpoint {node} out of range for {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("computation record already consumed by a backward pass")]
    RecordConsumed,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("empty evaluation set")]
    EmptyEvalSet,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GdgnnError>;
