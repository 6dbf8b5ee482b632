use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is numerically zero")]
    ZeroMatrix,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("requested rank {requested} exceeds the maximum {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("input matrix has zero Frobenius norm")]
    DegenerateInput,
    #[error("effective rank collapsed to zero")]
    RankCollapse,
    #[error("particles {0} and {1} coincide")]
    CoalescencePoint(usize, usize),
    #[error("configuration is at or too close to a node of the wavefunction")]
    NodeProximity,
    #[error("sample batch has {0} samples; at least 2 are required")]
    DegenerateBatch(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("walker {walker} produced a NaN log|psi|")]
    NanLogPsi { walker: usize },
}
