//! Classical sources of configuration samples.
//!
//! A statevector simulator restricted to the fixed particle sector prepares
//! local unitary cluster Jastrow (LUCJ) states by alternating orbital
//! rotations (Thouless lifting of a single-particle unitary) with diagonal
//! density-density phase layers; parameters come from a spectral
//! decomposition of CCSD doubles amplitudes, optionally sparsified to
//! heavy-hex connectivity after anchoring the dominant couplings by an
//! orbital permutation. Sampling supports the exact distribution, a global
//! depolarizing mix with the uniform distribution, and two uniform
//! baselines.

mod ansatz;
mod sampling;
mod state;

pub use ansatz::{
    decompose_t2, expand_spin_blocks, load_ccsd_json, permute_for_anchors, sparsify_heavy_hex,
    t2_spectral_decomposition, CcsdAmplitudes, FactorOrder, LucjLayer, LucjParams,
};
pub use sampling::{sample, NoiseModel};
pub use state::{
    apply_jastrow, apply_orbital_rotation, prepare_lucj, SectorState, DEFAULT_STATE_BUDGET,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("sector dimension {dim} exceeds the statevector budget {budget}")]
    VectorTooLarge { dim: u128, budget: usize },
    #[error("orbital generator is not anti-Hermitian (max deviation {0:.3e})")]
    NotAntiHermitian(f64),
    #[error("jastrow tensor is not symmetric (max deviation {0:.3e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("exponent sign must be +1 or -1, got {0}")]
    BadSign(f64),
    #[error("noise fraction must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("determinant {0} is outside the particle sector")]
    OutOfSector(String),
    #[error("invalid amplitudes: {0}")]
    InvalidAmplitudes(String),
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("amplitude file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
