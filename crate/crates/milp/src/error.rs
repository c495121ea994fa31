use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("simplex failed to converge after {iterations} iterations")]
    NumericalFailure { iterations: usize },
    #[error("branch-and-bound node limit exceeded ({nodes} nodes)")]
    NodeLimitExceeded { nodes: usize },
    #[error("binary fixing admits no feasible point")]
    InfeasibleFixing,
    #[error("invalid binary fixing: {0}")]
    InvalidFixing(String),
}
