//! Seeded generators for matrices used in tests, demos and validation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{operator_norm, ComplexMatrix, C64};

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let mut entries = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        entries.push(complex_gaussian(rng));
    }
    ComplexMatrix::from_row_major(rows, cols, entries).expect("gaussian entries are finite")
}

pub fn random_real_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let entries = (0..rows * cols)
        .map(|_| C64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    ComplexMatrix::from_row_major(rows, cols, entries).expect("gaussian entries are finite")
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases
/// of `R`'s diagonal moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ComplexMatrix {
    let g = random_complex_matrix(rng, n, n).into_dmatrix();
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for z in q.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
    }
    ComplexMatrix::from_dmatrix(q).expect("finite")
}

/// Random complex matrix rescaled to operator norm exactly `lambda` (up to roundoff).
pub fn random_contraction<R: Rng + ?Sized>(rng: &mut R, n: usize, lambda: f64) -> ComplexMatrix {
    let a = random_complex_matrix(rng, n, n);
    let norm = operator_norm(&a).expect("finite");
    a.scale(lambda / norm)
}
