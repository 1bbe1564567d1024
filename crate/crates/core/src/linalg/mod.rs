//! Dense complex linear algebra: norms, PSD square roots, spectral
//! decomposition of unitaries and permutation bookkeeping.

mod decompose;
mod matrix;
mod permutation;

pub use decompose::{
    angle_turns, eigenvalues, hermitian_eigen, inverse, operator_norm, psd_sqrt,
    unitarity_residual, unitary_spectral, UnitarySpectrum, PSD_CLAMP, UNITARY_TOL,
};
pub use matrix::{vec_norm, vec_sub, ComplexMatrix, C64, I, ONE, ZERO};
pub use permutation::{is_full_cycle, PermutationSpec};
