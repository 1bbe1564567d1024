//! Egerváry finite unitary dilation of a contractive coupling.

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, ComplexMatrix, C64, ONE, ZERO};
use crate::reservoir::{truncation_tail_bound, Coupling, LinearReservoirSystem};

/// Slack on `‖W1‖ ≤ 1` accepted by [`egervary_unitary`].
pub const CONTRACTION_SLACK: f64 = 1e-10;

/// Systems with `λ` this close to 1 are rejected.
pub const NEAR_UNIT_GAP: f64 = 1e-12;

/// Smallest `N ≥ 1` with `2·M·‖V‖·λ^{N+1}/(1-λ) < δ`.
pub fn choose_dilation_horizon(lambda: f64, norm_v: f64, bound: f64, delta: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("λ must lie in [0, 1), got {lambda}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
    }
    let scale = 2.0 * bound * norm_v / (1.0 - lambda);
    if scale == 0.0 || lambda == 0.0 {
        return Ok(1);
    }
    // start just below the analytic root and scan upward so the result is the
    // exact first horizon at which the floating-point bound drops under δ
    let estimate = ((delta / scale).ln() / lambda.ln() - 1.0).floor() - 2.0;
    let mut n = if estimate.is_finite() && estimate > 1.0 { estimate as u64 } else { 1 };
    while n > 1 && truncation_tail_bound(lambda, norm_v, bound, n - 1)? < delta {
        n -= 1;
    }
    while truncation_tail_bound(lambda, norm_v, bound, n)? >= delta {
        n += 1;
    }
    usize::try_from(n).map_err(|_| Error::InvalidArgument("horizon overflow".into()))
}

/// The `(N+1)n × (N+1)n` Egerváry unitary whose top-left block of `U^k` is
/// `W1^k` for `1 ≤ k ≤ N`.
///
/// Block layout: row 0 is `(W1, 0, …, 0, D_{W1*})`, row 1 is
/// `(D_{W1}, 0, …, 0, -W1*)`, and identities sit at blocks `(i, i-1)` for
/// `2 ≤ i ≤ N`.
pub fn egervary_unitary(w1: &ComplexMatrix, horizon: usize) -> Result<ComplexMatrix> {
    if !w1.is_square() {
        return Err(Error::InvalidArgument("dilation needs a square matrix".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("dilation horizon must be at least 1".into()));
    }
    let norm = operator_norm(w1)?;
    if norm > 1.0 + CONTRACTION_SLACK {
        return Err(Error::NotContractive { lambda: norm });
    }
    let n = w1.rows();
    let id = ComplexMatrix::identity(n);
    let w1_adj = w1.adjoint();
    let (d_w, d_w_adj) = defect_operators(w1)?;

    let size = (horizon + 1) * n;
    let mut u = ComplexMatrix::zeros(size, size);
    let last = horizon * n;
    u.set_block(0, 0, w1);
    u.set_block(0, last, &d_w_adj);
    u.set_block(n, 0, &d_w);
    u.set_block(n, last, &-&w1_adj);
    for i in 2..=horizon {
        u.set_block(i * n, (i - 1) * n, &id);
    }
    Ok(u)
}

/// `(D_W, D_{W*}) = ((I - W*W)^{1/2}, (I - WW*)^{1/2})` from one SVD
/// `W = Q Σ R*`, so that `W D_W = D_{W*} W` holds to roundoff even when
/// `‖W‖ = 1` makes both singular.
fn defect_operators(w: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = w.rows();
    if n == 0 {
        return Ok((ComplexMatrix::zeros(0, 0), ComplexMatrix::zeros(0, 0)));
    }
    let svd = w.as_dmatrix().clone().svd(true, true);
    let (Some(q), Some(r_adj)) = (svd.u, svd.v_t) else {
        return Err(Error::Convergence("singular value decomposition".into()));
    };
    let defects: Vec<C64> = svd
        .singular_values
        .iter()
        .map(|&s| {
            let s = s.min(1.0);
            C64::new(((1.0 - s) * (1.0 + s)).max(0.0).sqrt(), 0.0)
        })
        .collect();
    let d = ComplexMatrix::from_diagonal(&defects);
    let q = ComplexMatrix::from_dmatrix(q)?;
    let r_adj = ComplexMatrix::from_dmatrix(r_adj)?;
    let d_w = &(&r_adj.adjoint() * &d) * &r_adj;
    let d_w_adj = &(&q * &d) * &q.adjoint();
    Ok((hermitian_part(&d_w), hermitian_part(&d_w_adj)))
}

fn hermitian_part(h: &ComplexMatrix) -> ComplexMatrix {
    (h + &h.adjoint()).scale(0.5)
}

/// Result of [`dilate_system`].
#[derive(Debug, Clone)]
pub struct Dilation {
    pub system: LinearReservoirSystem,
    pub horizon: usize,
    /// Bound on `sup_t ‖J* x'_t − x_t‖` over `M`-bounded streams.
    pub state_error_bound: f64,
}

/// `(N+1)·n`, the state dimension produced by dilating at horizon `N`.
pub fn dilated_dimension(n: usize, horizon: usize) -> u128 {
    (horizon as u128 + 1) * n as u128
}

fn check_lambda(r: &LinearReservoirSystem) -> Result<f64> {
    let lambda = r.lambda();
    if lambda == 0.0 {
        return Err(Error::Precondition(
            "the zero coupling has no unitary direction to dilate".into(),
        ));
    }
    if lambda > 1.0 - NEAR_UNIT_GAP {
        return Err(Error::NotContractive { lambda });
    }
    Ok(lambda)
}

/// Dilates `R` to `(λU, [V; 0], h∘J*)` with `U` unitary, choosing the
/// horizon so projected states stay within `δ` on `M`-bounded streams.
pub fn dilate_system(r: &LinearReservoirSystem, delta: f64, bound: f64) -> Result<Dilation> {
    let lambda = check_lambda(r)?;
    let norm_v = r.input_norm()?;
    let horizon = choose_dilation_horizon(lambda, norm_v, bound, delta)?;
    dilate_with_horizon(r, horizon, bound)
}

/// [`dilate_system`] at a caller-chosen horizon.
pub fn dilate_with_horizon(r: &LinearReservoirSystem, horizon: usize, bound: f64) -> Result<Dilation> {
    let lambda = check_lambda(r)?;
    let n = r.n();
    let u = egervary_unitary(&r.w_dense().scale(1.0 / lambda), horizon)?;
    let size = u.rows();
    let v = ComplexMatrix::vstack(&[r.v(), &ComplexMatrix::zeros(size - n, r.m())])?;
    let projection = ComplexMatrix::from_fn(n, size, |i, j| if i == j { ONE } else { ZERO });
    let readout = r.readout().compose(&projection)?;
    let system = LinearReservoirSystem::with_coupling(Coupling::Dense(u.scale(lambda)), v, readout)?;
    let state_error_bound = truncation_tail_bound(lambda, r.input_norm()?, bound, horizon as u64)?;
    Ok(Dilation {
        system,
        horizon,
        state_error_bound,
    })
}
