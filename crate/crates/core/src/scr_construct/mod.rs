//! Terminal constructions on full-cycle couplings: SMCR, ℂ-SCR and Twin SCR.

mod basis;
mod build;
mod cycle;
mod rational;

pub use basis::{expand_in_basis, sign_basis, SignBasis};
pub use build::{
    build_cscr, build_cscr_with_delta, build_cscr_with_denominator, build_smcr, build_twin_scr,
    build_twin_with_delta, build_twin_with_denominator, input_tolerance, state_delta, BuildOptions, CscrBuild,
    SmcrBuild, TwinBuild, DEFAULT_MAX_DIM, DENSE_ENTRY_CAP, STATE_DELTA_CAP,
};
pub(crate) use build::{check_dense, check_dim};
pub use cycle::{block_cycle, block_cycle_unchecked};
pub use rational::{
    next_coprime, rational_denominator, rationalize_complex, rationalize_complex_with_denominator,
    rationalize_real, rationalize_real_with_denominator, FactorRun, Rationalization,
};
