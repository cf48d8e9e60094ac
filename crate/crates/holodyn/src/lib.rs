//! Reservoir-driven holonomy toolkit.
//!
//! Evolves open quantum systems under time-dependent Lindblad operators,
//! tracks the instantaneous decoherence-free subspace (DFS), computes the
//! geometric holonomy acquired after a closed reservoir loop, and checks the
//! predicted adiabatic scaling laws against full master-equation integration.

pub mod adiabatic_expansion;
pub mod dfs_tracker;
pub mod experiment_harness;
pub mod holonomy;
pub mod lindblad_engine;
pub mod operator_algebra;
pub mod reservoir_path;

use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum HolodynError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("empty DFS: the kernel of D is trivial")]
    EmptyKernel,
    #[error("spectral gap collapsed: gap {gap:.3e} below floor {floor:.3e}")]
    GapCollapse { gap: f64, floor: f64 },
    #[error("DFS dimension jump along the path: {from} -> {to} at s={s}")]
    DfsDimensionJump { from: usize, to: usize, s: f64 },
    #[error("kernel of D larger than common eigenspace of the Lindblad operators (inconsistent c_k)")]
    InconsistentEigenvalues,
    #[error("path not closed: ||Pi(1) - Pi(0)|| = {defect:.3e}")]
    OpenPath { defect: f64 },
    #[error("frame rigidity drift {defect:.3e} exceeds {tol:.3e}; refine the step count")]
    FrameRigidity { defect: f64, tol: f64 },
    #[error("stability guard violated: kappa*T/steps = {value:.3} > 0.1")]
    StabilityGuard { value: f64 },
    #[error("trace defect {defect:.3e} exceeds 1e-6 during integration")]
    TraceDrift { defect: f64 },
    #[error("grid mismatch between trajectory and frames")]
    GridMismatch,
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ndarray_linalg::error::LinalgError> for HolodynError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        HolodynError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HolodynError>;
