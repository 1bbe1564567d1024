use std::f64::consts::TAU;

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::{ComplexMatrix, C64};
use crate::error::{mismatch, Error, Result};
use crate::random::random_unitary;

/// Eigenvalues closer to zero than this (relative to `max(1, ‖H‖)`) are clamped.
pub const PSD_CLAMP: f64 = 1e-10;
/// Tolerated `‖U*U − I‖_F` for inputs that must be unitary.
pub const UNITARY_TOL: f64 = 1e-8;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;
const SCHUR_RETRY_SEEDS: [u64; 3] = [0x5eed_0001, 0x5eed_0002, 0x5eed_0003];

fn require_finite(a: &ComplexMatrix) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn require_square(a: &ComplexMatrix, context: &'static str) -> Result<usize> {
    if a.is_square() {
        Ok(a.rows())
    } else {
        Err(mismatch(
            context,
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ))
    }
}

/// Largest singular value.
pub fn operator_norm(a: &ComplexMatrix) -> Result<f64> {
    require_finite(a)?;
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let k = r.min(c);
    let m = a.as_dmatrix();
    if r.max(c) > 4 * k {
        // skinny: eigenvalues of the small Gram matrix
        let gram = if r < c { m * m.adjoint() } else { m.adjoint() * m };
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        return Ok(top.max(0.0).sqrt());
    }
    let svd = SVD::new(m.clone(), false, false);
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Hermitian eigendecomposition `H = Q diag(λ) Q*`, eigenvalues ascending.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    require_finite(h)?;
    let n = require_square(h, "hermitian eigendecomposition")?;
    let m = h.as_dmatrix();
    let scale = h.frobenius_norm();
    let asymmetry = (m - m.adjoint()).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if asymmetry > 1e-10 * scale.max(f64::MIN_POSITIVE) && asymmetry > 0.0 {
        return Err(Error::NotHermitian { asymmetry });
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, ComplexMatrix::from_dmatrix(vectors)?))
}

/// Square root of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues in `[-PSD_CLAMP·max(1,‖H‖), 0)` are treated as roundoff and
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (values, q) = hermitian_eigen(h)?;
    let tol = PSD_CLAMP * h.frobenius_norm().max(1.0);
    if let Some(&min) = values.first() {
        if min < -tol {
            return Err(Error::Indefinite { min_eigenvalue: min });
        }
    }
    let roots: Vec<C64> = values.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)).collect();
    let qm = q.as_dmatrix();
    let mut scaled = qm.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(r.re);
    }
    let s = &scaled * qm.adjoint();
    // exact Hermitian symmetry on output
    let s = (&s + s.adjoint()) * C64::new(0.5, 0.0);
    ComplexMatrix::from_dmatrix(s)
}

/// `‖U*U − I‖_F`, an upper bound on the operator-norm residual.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    let g = &u.adjoint() * u;
    let n = g.rows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (g[(i, j)] - C64::new(target, 0.0)).norm_sqr();
        }
    }
    acc.sqrt()
}

/// `U = S* · diag(ω) · S` with `S` unitary and each `ω_j` on the unit circle.
#[derive(Debug, Clone)]
pub struct UnitarySpectrum {
    /// Rows are the (conjugated) eigenvectors: `S = Q*` where `U Q = Q diag(ω)`.
    pub basis: ComplexMatrix,
    /// Sorted by principal angle in `[0, 2π)`.
    pub eigenvalues: Vec<C64>,
}

impl UnitarySpectrum {
    /// Angles divided by 2π, each in `[0, 1)`.
    pub fn turns(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|w| angle_turns(*w)).collect()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = ComplexMatrix::from_diagonal(&self.eigenvalues);
        &(&self.basis.adjoint() * &d) * &self.basis
    }
}

/// Principal angle of `z` as a fraction of a full turn, in `[0, 1)`.
pub fn angle_turns(z: C64) -> f64 {
    let t = z.arg().rem_euclid(TAU) / TAU;
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

fn complex_schur(m: &DMatrix<C64>) -> Option<(DMatrix<C64>, DMatrix<C64>)> {
    if let Some(s) = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER) {
        return Some(s.unpack());
    }
    // Shifted QR can stagnate on exactly cyclic structure; a fixed unitary
    // change of basis breaks the symmetry without changing the spectrum.
    let n = m.nrows();
    for seed in SCHUR_RETRY_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q0 = random_unitary(&mut rng, n).into_dmatrix();
        let conj = q0.adjoint() * m * &q0;
        if let Some(s) = Schur::try_new(conj, SCHUR_EPS, SCHUR_MAX_ITER) {
            let (q, t) = s.unpack();
            return Some((q0 * q, t));
        }
    }
    None
}

/// Spectral decomposition of a unitary matrix through its complex Schur form,
/// which is diagonal for normal input.
pub fn unitary_spectral(u: &ComplexMatrix) -> Result<UnitarySpectrum> {
    require_finite(u)?;
    let n = require_square(u, "unitary spectral decomposition")?;
    let residual = unitarity_residual(u);
    if residual > UNITARY_TOL {
        return Err(Error::NotUnitary { residual });
    }
    if n == 0 {
        return Ok(UnitarySpectrum {
            basis: ComplexMatrix::zeros(0, 0),
            eigenvalues: Vec::new(),
        });
    }
    let (q, t) = complex_schur(u.as_dmatrix())
        .ok_or_else(|| Error::Convergence("complex Schur decomposition".into()))?;

    let raw: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| angle_turns(raw[a]).total_cmp(&angle_turns(raw[b])));

    let eigenvalues: Vec<C64> = order.iter().map(|&i| raw[i] / raw[i].norm()).collect();
    let mut vecs = DMatrix::from_fn(n, n, |i, j| q[(i, order[j])]);
    for mut col in vecs.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|z| z.norm() > 1e-12) {
            let phase = first.conj() / first.norm();
            for z in col.iter_mut() {
                *z *= phase;
            }
        }
    }
    let spectrum = UnitarySpectrum {
        basis: ComplexMatrix::from_dmatrix(vecs.adjoint())?,
        eigenvalues,
    };
    let recon = (&spectrum.reconstruct() - u).frobenius_norm();
    if recon > UNITARY_TOL {
        return Err(Error::NotUnitary { residual: recon });
    }
    Ok(spectrum)
}

/// Eigenvalues of a square matrix via complex Schur form (unsorted).
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    require_finite(a)?;
    require_square(a, "eigenvalues")?;
    let (_, t) = complex_schur(a.as_dmatrix())
        .ok_or_else(|| Error::Convergence("complex Schur decomposition".into()))?;
    Ok((0..a.rows()).map(|i| t[(i, i)]).collect())
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_square(a, "matrix inverse")?;
    let inv = a
        .as_dmatrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("matrix is singular".into()))?;
    ComplexMatrix::from_dmatrix(inv)
}
