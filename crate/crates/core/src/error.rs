use thiserror::Error;

use crate::conventions::TensorRank;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("odd grid size: {axis} axis has {n} points")]
    OddGridSize { axis: &'static str, n: usize },
    #[error("grid too small: {axis} axis has {n} points (minimum 8)")]
    GridTooSmall { axis: &'static str, n: usize },
    #[error("nonpositive spacing: {axis} = {value}")]
    NonPositiveSpacing { axis: &'static str, value: f64 },
    #[error("grid needs {bytes} bytes per complex component, above the memory cap of {cap} bytes")]
    MemoryCap { bytes: u64, cap: u64 },
    #[error("invalid axis index {0} (expected 0..=3)")]
    InvalidAxis(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite sample in field")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TestFunctionError {
    #[error("Gaussian width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("bump radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("component profile for a {rank} function needs {expected} entries, got {got}")]
    ProfileLength { rank: TensorRank, expected: usize, got: usize },
    #[error("cannot combine a {0} function with a {1} function")]
    RankMismatch(TensorRank, TensorRank),
    #[error("a sum of test functions needs at least one term")]
    EmptySum,
    #[error("non-finite parameter in test function")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("slot `{0}` is not bound")]
    UnboundSlot(String),
    #[error("slot `{slot}` bound to a {got} field, expected {expected}")]
    BindingRank { slot: String, expected: TensorRank, got: TensorRank },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("shell fields live on different grids")]
    GridMismatch,
    #[error("kernel expects {expected} input, got {got}")]
    RankMismatch { expected: TensorRank, got: TensorRank },
    #[error("shell fields were projected at different masses ({0} vs {1})")]
    MassMismatch(f64, f64),
    #[error("every mass-shell point with m = {mass} lies above the k0 Nyquist limit; the grid is too coarse for this mass")]
    AllOutOfBand { mass: f64 },
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("self-product {value} is negative beyond tolerance; kernel positivity violated")]
    PositivityViolation { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("term {term} ({label}): {source}")]
    Term { term: usize, label: String, source: KernelError },
    #[error("permanent of a {n}x{n} matrix exceeds the size cap {cap}")]
    PermanentCap { n: usize, cap: usize },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("operator word of length {len} exceeds the cap {cap}")]
    MonomialCap { len: usize, cap: usize },
    #[error("Wightman function of order {n} exceeds the cap {cap}")]
    WightmanCap { n: usize, cap: usize },
    #[error("null state direction: xi(g,g) = {0}")]
    NullState(f64),
    #[error("closed-form characteristic functions exist for the vacuum and single-creator states only")]
    UnsupportedState,
    #[error("lambda has {got} entries for {expected} measurements")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("function index {0} out of range")]
    IndexOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("singular geometry: F is not positive definite{}", ridge_hint(*.ridge))]
    SingularGeometry { ridge: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("F is not symmetric")]
    NotSymmetric,
    #[error("integration box too small: boundary density {boundary:e} exceeds 1e-12 of the maximum {max:e}")]
    BoxTooSmall { boundary: f64, max: f64 },
    #[error("tensor-grid integration supports n <= 3, got {0}")]
    TooManyDimensions(usize),
    #[error("G table must be strictly increasing with at least two knots")]
    NotMonotone,
    #[error("resolution must be at least 2 points per axis")]
    Resolution,
}

fn ridge_hint(ridge: f64) -> String {
    if ridge > 0.0 {
        format!(" (ridge {ridge:e} applied)")
    } else {
        " (no ridge requested)".to_string()
    }
}

/// Crate-level error.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    TestFunction(#[from] TestFunctionError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error("oracle: {0}")]
    Oracle(String),
}

impl Error {
    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Density(DensityError::SingularGeometry { .. })
                | Error::Kernel(KernelError::AllOutOfBand { .. })
                | Error::Kernel(KernelError::PositivityViolation { .. })
                | Error::Algebra(AlgebraError::Term { .. })
                | Error::Algebra(AlgebraError::NullState(_))
                | Error::Oracle(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
