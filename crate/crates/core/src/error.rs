use thiserror::Error;

/// Errors raised by the lattice, free-fermion, metrology and many-body engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("fibonacci index {0} overflows u64")]
    FibonacciOverflow(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid particle number n_f={n_f} for L={l}")]
    InvalidFilling { l: usize, n_f: usize },

    #[error("eigensolver failed to converge: {0}")]
    EigenNonConvergence(String),

    #[error("degenerate Fermi level: gap {gap:e} between orbitals {n_f} and {}", n_f + 1)]
    DegenerateFermiLevel { n_f: usize, gap: f64 },

    #[error("eigenvalue {0:e} within tolerance of zero; negative-energy count is ambiguous")]
    AmbiguousZeroMode(f64),

    #[error("orbitals are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("expectation value has imaginary residue {0:e}")]
    ComplexExpectation(f64),

    #[error("variance {0:e} is negative beyond tolerance")]
    NegativeVariance(f64),

    #[error("finite-difference step too small: infidelity {infidelity:e} at dV={delta_v:e}")]
    StepTooSmall { delta_v: f64, infidelity: f64 },

    #[error("finite-difference step too large: infidelity {infidelity:e} at dV={delta_v:e}")]
    StepTooLarge { delta_v: f64, infidelity: f64 },

    #[error("distribution is not normalized (sum {0})")]
    NotNormalized(f64),

    #[error("classical Fisher information diverges: outcome {0} has zero probability but nonzero slope")]
    CfiDivergent(usize),

    #[error("deterministic observable: zero variance with slope {0:e}")]
    DeterministicObservable(f64),

    #[error("Fisher information must be positive, got {0}")]
    NonPositiveFisher(f64),

    #[error("peak lies on the grid boundary at V={0}; widen grid")]
    PeakOnBoundary(f64),

    #[error("not enough points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("non-positive value {value} at x={x} inside fit window")]
    NonPositiveData { x: f64, value: f64 },

    #[error("curves are sampled on different grids")]
    MismatchedGrids,

    #[error("basis dimension {dim} exceeds cap {cap}")]
    BasisTooLarge { dim: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
