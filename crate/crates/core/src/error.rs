use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("permutation of length {got} does not match graph on {expected} vertices")]
    PermutationLength { expected: usize, got: usize },
    #[error("not a permutation: {0:?}")]
    NotAPermutation(Vec<usize>),
    #[error("graph on {n} vertices exceeds the budget of {limit}")]
    OverBudget { n: usize, limit: usize },
    #[error("edge probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("graphs of mixed sizes: {0} and {1}")]
    MixedSizes(usize, usize),
    #[error("cell {cell}: {reason}")]
    Cell { cell: String, reason: String },
    #[error("qubit index {qubit} out of range for {n} qubits")]
    BadQubit { qubit: usize, n: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("empty target set")]
    EmptyTargets,
    #[error("invalid interval [{lo}, {hi}]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("loss `{0}` is evaluation-only and has no gradient")]
    NotDifferentiable(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },
    #[error("dataset of {got} entries is too small, need at least {need}")]
    TooSmall { need: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ansatz mismatch: checkpoint is {found}, expected {expected}")]
    SpecMismatch { expected: String, found: String },
    #[error("underdetermined fit: {0}")]
    Underdetermined(String),
    #[error("no shift fitted for graph size {0}")]
    UncoveredSize(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation failed at line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
