use crate::error::{mismatch, Result};
use crate::linalg::{operator_norm, ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    /// `{[1]}`.
    Unit,
    /// `(1, 1)` and `(1, -1)` reshaped.
    Hadamard,
    /// `J - 2·e_i` for each row-major position `i`.
    Flip,
}

/// A basis of `n×m` complex matrices whose elements have all entries in
/// `{+1, -1}`.
///
/// Elements are generated on demand; only the shape is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignBasis {
    n: usize,
    m: usize,
    family: Family,
}

pub fn sign_basis(n: usize, m: usize) -> SignBasis {
    assert!(n >= 1 && m >= 1, "sign basis needs a nonempty shape");
    let family = match n * m {
        1 => Family::Unit,
        2 => Family::Hadamard,
        _ => Family::Flip,
    };
    SignBasis { n, m, family }
}

impl SignBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Entry at row-major position `pos` of element `idx`, as `±1`.
    pub fn entry(&self, idx: usize, pos: usize) -> f64 {
        match self.family {
            Family::Unit => 1.0,
            Family::Hadamard => {
                if idx == 1 && pos == 1 {
                    -1.0
                } else {
                    1.0
                }
            }
            Family::Flip => {
                if idx == pos {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn element(&self, idx: usize) -> ComplexMatrix {
        assert!(idx < self.len());
        ComplexMatrix::from_fn(self.n, self.m, |r, c| C64::new(self.entry(idx, r * self.m + c), 0.0))
    }

    pub fn elements(&self) -> Vec<ComplexMatrix> {
        (0..self.len()).map(|i| self.element(i)).collect()
    }

    /// `max_i ‖E_i‖`. Row and column permutations move any flipped position
    /// to any other, so all elements of a family share one norm.
    pub fn max_element_norm(&self) -> Result<f64> {
        match self.family {
            Family::Unit => Ok(1.0),
            Family::Hadamard => Ok(std::f64::consts::SQRT_2),
            Family::Flip => operator_norm(&self.element(0)),
        }
    }

    /// `Σ_i a_i E_i`.
    pub fn combine(&self, coefficients: &[C64]) -> ComplexMatrix {
        assert_eq!(coefficients.len(), self.len());
        match self.family {
            Family::Unit => ComplexMatrix::from_fn(1, 1, |_, _| coefficients[0]),
            Family::Hadamard => {
                let (a, b) = (coefficients[0], coefficients[1]);
                let flat = [a + b, a - b];
                ComplexMatrix::from_fn(self.n, self.m, |r, c| flat[r * self.m + c])
            }
            Family::Flip => {
                let total: C64 = coefficients.iter().sum();
                ComplexMatrix::from_fn(self.n, self.m, |r, c| total - coefficients[r * self.m + c] * 2.0)
            }
        }
    }

    /// Coefficients `a` with `Σ a_i E_i = V`.
    pub fn expand(&self, v: &ComplexMatrix) -> Result<Vec<C64>> {
        if v.shape() != (self.n, self.m) {
            return Err(mismatch(
                "matrix to expand",
                format!("{}x{}", self.n, self.m),
                format!("{}x{}", v.rows(), v.cols()),
            ));
        }
        let flat = v.row_major();
        Ok(match self.family {
            Family::Unit => flat,
            Family::Hadamard => vec![(flat[0] + flat[1]) * 0.5, (flat[0] - flat[1]) * 0.5],
            Family::Flip => {
                // (Σa)·1 - 2a = v  ⇒  Σa = Σv/(nm-2), a_i = (Σa - v_i)/2
                let total = flat.iter().sum::<C64>() / (self.len() as f64 - 2.0);
                flat.iter().map(|vi| (total - vi) * 0.5).collect()
            }
        })
    }
}

pub fn expand_in_basis(v: &ComplexMatrix, basis: &SignBasis) -> Result<Vec<C64>> {
    basis.expand(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ONE, ZERO};
    use crate::random::random_complex_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_bases() {
        assert_eq!(sign_basis(1, 1).elements(), vec![ComplexMatrix::identity(1)]);
        let h = sign_basis(1, 2).elements();
        assert_eq!(h[0].row_major(), vec![ONE, ONE]);
        assert_eq!(h[1].row_major(), vec![ONE, -ONE]);
    }

    #[test]
    fn flattened_basis_has_full_rank() {
        for (n, m) in [(2, 3), (3, 1), (1, 4), (2, 1), (4, 4)] {
            let b = sign_basis(n, m);
            let k = b.len();
            let flat = ComplexMatrix::from_fn(k, k, |i, j| C64::new(b.entry(i, j), 0.0));
            let svd = flat.as_dmatrix().clone().svd(false, false);
            let smin = svd.singular_values.min();
            assert!(smin > 1e-8, "({n},{m}) singular");
            for e in b.elements() {
                assert!(e.row_major().iter().all(|z| *z == ONE || *z == -ONE));
            }
        }
    }

    #[test]
    fn expansion_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, m) in [(1, 1), (1, 2), (2, 1), (3, 2), (5, 3)] {
            let b = sign_basis(n, m);
            let v = random_complex_matrix(&mut rng, n, m);
            let a = b.expand(&v).unwrap();
            let back = b.combine(&a);
            assert!((&back - &v).max_abs() < 1e-12);
            // brute-force sum over materialized elements
            let mut acc = ComplexMatrix::zeros(n, m);
            for (ai, e) in a.iter().zip(b.elements()) {
                acc = &acc + &e.scale_complex(*ai);
            }
            assert!((&acc - &v).max_abs() < 1e-10);
        }
    }

    #[test]
    fn expansion_of_basis_elements_and_zero() {
        let b = sign_basis(3, 2);
        let a = b.expand(&b.element(0)).unwrap();
        assert!((a[0] - ONE).norm() < 1e-15);
        assert!(a[1..].iter().all(|z| z.norm() < 1e-15));
        assert!(b.expand(&ComplexMatrix::zeros(3, 2)).unwrap().iter().all(|z| *z == ZERO));
    }

    #[test]
    fn shared_norm_matches_every_element() {
        for (n, m) in [(1, 2), (2, 2), (3, 2), (1, 5)] {
            let b = sign_basis(n, m);
            let l = b.max_element_norm().unwrap();
            for e in b.elements() {
                assert!((operator_norm(&e).unwrap() - l).abs() < 1e-10);
            }
        }
    }
}
