use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("UnstableSystem: spectral abscissa {abscissa} is not negative")]
    UnstableSystem { abscissa: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("LyapunovSolveFailure: {0}")]
    LyapunovSolveFailure(String),

    #[error("IndexMismatch: expected {expected} entries, got {got}")]
    IndexMismatch { expected: usize, got: usize },

    #[error("node {node} is outside 1..={dim}")]
    NodeOutOfRange { node: usize, dim: usize },

    #[error("EigenFailure: {0}")]
    EigenFailure(String),

    #[error("EmptyIndexSet")]
    EmptyIndexSet,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("NotCommuting: max commutator residual {residual:e}")]
    NotCommuting { residual: f64 },

    #[error("DiagonalizationResidualTooLarge: {residual:e}")]
    DiagonalizationResidualTooLarge { residual: f64 },

    #[error("InfeasiblePoint: n-th eigenvalue {nth_eigenvalue:e} is not positive")]
    InfeasiblePoint { nth_eigenvalue: f64 },

    #[error("NotDiagonal: model has no one-to-one node/mode structure")]
    NotDiagonal,

    #[error("CapsBind: closed-form weight {value} exceeds cap {cap} at position {position}")]
    CapsBind { position: usize, value: f64, cap: f64 },

    #[error("EmptyFeasibleSet: caps sum to {cap_sum} < 1")]
    EmptyFeasibleSet { cap_sum: f64 },

    #[error("Infeasible: no capped-simplex point gives a positive {n}-th eigenvalue")]
    Infeasible { n: usize },

    #[error("TooLarge: lattice has {points} points, budget is {budget}")]
    TooLarge { points: u128, budget: u128 },

    #[error("TargetOutsideSpan: projection residual {residual:e}")]
    TargetOutsideSpan { residual: f64 },

    #[error("SingularGramian: eigenvalue {eigenvalue:e} among the top {n}")]
    SingularGramian { n: usize, eigenvalue: f64 },

    #[error("RankDeficient: eigenvalue {eigenvalue:e} among the top {n}")]
    RankDeficient { n: usize, eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
