use num_integer::Integer;

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, ComplexMatrix, C64, I, ONE};

use super::basis::{sign_basis, SignBasis};

/// `copies` repetitions of `unit · E_{basis_index}` with `unit ∈ {±1, ±i}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorRun {
    pub basis_index: usize,
    pub unit: C64,
    pub copies: u64,
}

/// `V ≈ (1/N)·Σ_{j=1}^{k} F_j` with each `F_j` a signed basis element.
#[derive(Debug, Clone, PartialEq)]
pub struct Rationalization {
    pub basis: SignBasis,
    pub denominator: u64,
    pub runs: Vec<FactorRun>,
    /// Factor count before padding.
    pub k0: u64,
    pub k: u64,
    /// `‖V - (1/N)ΣF_j‖` in operator norm.
    pub residual: f64,
}

impl Rationalization {
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    pub fn factors(&self) -> impl Iterator<Item = ComplexMatrix> + '_ {
        self.runs.iter().flat_map(move |run| {
            let f = self.basis.element(run.basis_index).scale_complex(run.unit);
            std::iter::repeat_n(f, run.copies as usize)
        })
    }

    /// `(1/N)·Σ F_j`.
    pub fn approximant(&self) -> ComplexMatrix {
        approximant(&self.basis, self.denominator, &self.runs)
    }

    /// Every factor has entries in `{±1}` only, or `{±i}` only.
    pub fn factors_are_signed(&self) -> bool {
        self.runs.iter().all(|r| [ONE, -ONE, I, -I].contains(&r.unit))
    }
}

fn approximant(basis: &SignBasis, denominator: u64, runs: &[FactorRun]) -> ComplexMatrix {
    let mut coeffs = vec![C64::new(0.0, 0.0); basis.len()];
    for r in runs {
        coeffs[r.basis_index] += r.unit * r.copies as f64;
    }
    let scale = 1.0 / denominator as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    basis.combine(&coeffs)
}

/// `round(x)` with halves going toward zero.
fn round_half_toward_zero(x: f64) -> f64 {
    let t = x.trunc();
    if (x - t).abs() == 0.5 {
        t
    } else {
        x.round()
    }
}

/// Smallest `k ≥ max(k0, 1)` with `gcd(k, n) = 1`.
pub fn next_coprime(k0: u64, n: u64) -> u64 {
    let mut k = k0.max(1);
    while k.gcd(&n) != 1 {
        k += 1;
    }
    k
}

/// `N = ⌊2·L·nm/δ⌋ + 1`, the smallest integer with `nm/N < δ/(2L)`.
pub fn rational_denominator(basis: &SignBasis, delta: f64) -> Result<u64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
    }
    let l = basis.max_element_norm()?;
    let raw = (2.0 * l * basis.len() as f64 / delta).floor() + 1.0;
    if !(raw < u64::MAX as f64 / 4.0) {
        return Err(Error::InvalidArgument(format!("rationalization denominator {raw:e} overflows")));
    }
    Ok(raw as u64)
}

/// Integer numerators `round(N·a_i)` of a real coefficient vector.
fn numerators(coeffs: &[f64], denominator: u64) -> Result<Vec<i64>> {
    coeffs
        .iter()
        .map(|&a| {
            let b = round_half_toward_zero(a * denominator as f64);
            if b.abs() < i64::MAX as f64 / 4.0 {
                Ok(b as i64)
            } else {
                Err(Error::InvalidArgument(format!("numerator {b:e} overflows")))
            }
        })
        .collect()
}

fn signed_runs(numerators: &[i64], unit: C64) -> Vec<FactorRun> {
    numerators
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0)
        .map(|(i, &b)| FactorRun {
            basis_index: i,
            unit: if b > 0 { unit } else { -unit },
            copies: b.unsigned_abs(),
        })
        .collect()
}

fn real_coefficients(basis: &SignBasis, v: &ComplexMatrix) -> Result<Vec<f64>> {
    Ok(basis.expand(v)?.into_iter().map(|z| z.re).collect())
}

fn finish(basis: SignBasis, denominator: u64, mut runs: Vec<FactorRun>, pad_unit: C64, v: &ComplexMatrix) -> Result<Rationalization> {
    let k0: u64 = runs.iter().map(|r| r.copies).sum();
    let k = next_coprime(k0, basis.n() as u64);
    if k > k0 {
        runs.push(FactorRun {
            basis_index: 0,
            unit: pad_unit,
            copies: k - k0,
        });
    }
    let residual = operator_norm(&(v - &approximant(&basis, denominator, &runs)))?;
    Ok(Rationalization {
        basis,
        denominator,
        runs,
        k0,
        k,
        residual,
    })
}

/// Rationalizes a real matrix at a fixed denominator `N`.
pub fn rationalize_real_with_denominator(v: &ComplexMatrix, denominator: u64) -> Result<Rationalization> {
    if !v.is_real() {
        return Err(Error::InvalidArgument("real rationalization needs a real matrix".into()));
    }
    if denominator == 0 {
        return Err(Error::InvalidArgument("denominator must be positive".into()));
    }
    let basis = sign_basis(v.rows(), v.cols());
    let b = numerators(&real_coefficients(&basis, v)?, denominator)?;
    finish(basis, denominator, signed_runs(&b, ONE), ONE, v)
}

/// `V ≈ (1/N)ΣF_j` with `F_j ∈ {±E_i}`, `‖V - (1/N)ΣF_j‖ < δ`, `gcd(k, n) = 1`.
pub fn rationalize_real(v: &ComplexMatrix, delta: f64) -> Result<Rationalization> {
    let basis = sign_basis(v.rows(), v.cols());
    let r = rationalize_real_with_denominator(v, rational_denominator(&basis, delta)?)?;
    check_residual(r, delta)
}

/// Rationalizes a complex matrix at a fixed denominator, with `±E_i` factors
/// for the real part and `±i·E_i` for the imaginary part.
pub fn rationalize_complex_with_denominator(v: &ComplexMatrix, denominator: u64) -> Result<Rationalization> {
    if denominator == 0 {
        return Err(Error::InvalidArgument("denominator must be positive".into()));
    }
    let basis = sign_basis(v.rows(), v.cols());
    let br = numerators(&real_coefficients(&basis, &v.re())?, denominator)?;
    let bi = numerators(&real_coefficients(&basis, &v.im())?, denominator)?;
    let mut runs = signed_runs(&br, ONE);
    let pad_unit = if runs.is_empty() && bi.iter().any(|&b| b != 0) { I } else { ONE };
    runs.extend(signed_runs(&bi, I));
    finish(basis, denominator, runs, pad_unit, v)
}

/// Complex version of [`rationalize_real`]: each of `Re V` and `Im V` is
/// approximated within `δ/2` on the common denominator.
pub fn rationalize_complex(v: &ComplexMatrix, delta: f64) -> Result<Rationalization> {
    let basis = sign_basis(v.rows(), v.cols());
    let r = rationalize_complex_with_denominator(v, rational_denominator(&basis, delta / 2.0)?)?;
    check_residual(r, delta)
}

fn check_residual(r: Rationalization, delta: f64) -> Result<Rationalization> {
    if r.residual < delta {
        Ok(r)
    } else {
        Err(Error::Convergence(format!(
            "rationalization residual {} is not below δ = {delta}",
            r.residual
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;
    use crate::random::{random_complex_matrix, random_real_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force_residual(v: &ComplexMatrix, r: &Rationalization) -> f64 {
        let mut acc = ComplexMatrix::zeros(v.rows(), v.cols());
        let mut count = 0u64;
        for f in r.factors() {
            assert!(f.row_major().iter().all(|z| z.norm() == 1.0 && (z.re == 0.0 || z.im == 0.0)));
            acc = &acc + &f;
            count += 1;
        }
        assert_eq!(count, r.k);
        operator_norm(&(v - &acc.scale(1.0 / r.denominator as f64))).unwrap()
    }

    #[test]
    fn ties_round_toward_zero() {
        assert_eq!(round_half_toward_zero(2.5), 2.0);
        assert_eq!(round_half_toward_zero(-2.5), -2.0);
        assert_eq!(round_half_toward_zero(2.6), 3.0);
        assert_eq!(round_half_toward_zero(-0.4), -0.0);
    }

    #[test]
    fn coprime_padding() {
        assert_eq!(next_coprime(0, 3), 1);
        assert_eq!(next_coprime(6, 3), 7);
        assert_eq!(next_coprime(8, 6), 11);
        assert_eq!(next_coprime(5, 1), 5);
    }

    #[test]
    fn basis_element_is_reproduced() {
        let basis = sign_basis(3, 2);
        let e1 = basis.element(0);
        let r = rationalize_real(&e1, 0.3).unwrap();
        let n = rational_denominator(&basis, 0.3).unwrap();
        assert_eq!(r.denominator, n);
        assert_eq!(r.k0, n);
        assert_eq!(r.runs[0], FactorRun { basis_index: 0, unit: ONE, copies: n });
        let l = basis.max_element_norm().unwrap();
        assert!(r.residual <= (r.k - r.k0) as f64 * l / n as f64 + 1e-12);
        assert!(r.residual < 0.3);
    }

    #[test]
    fn zero_matrix_pads_once() {
        let v = ComplexMatrix::zeros(2, 2);
        let r = rationalize_real(&v, 0.5).unwrap();
        assert_eq!((r.k0, r.k), (0, 1));
        let l = r.basis.max_element_norm().unwrap();
        assert!((r.residual - l / r.denominator as f64).abs() < 1e-12);
    }

    #[test]
    fn random_real_matrix_rationalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_real_matrix(&mut rng, 3, 2);
        let r = rationalize_real(&v, 0.1).unwrap();
        assert!(r.residual < 0.1);
        assert_eq!(r.k.gcd(&3), 1);
        assert!((brute_force_residual(&v, &r) - r.residual).abs() < 1e-9);
        assert!(r.runs.iter().all(|f| f.unit == ONE || f.unit == -ONE));
    }

    #[test]
    fn complex_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = random_complex_matrix(&mut rng, 2, 2);
        let r = rationalize_complex(&v, 0.1).unwrap();
        assert!(r.residual < 0.1);
        assert_eq!(r.k.gcd(&2), 1);
        assert!(r.factors_are_signed());
        assert!((brute_force_residual(&v, &r) - r.residual).abs() < 1e-9);

        let real = random_real_matrix(&mut rng, 2, 1);
        let rc = rationalize_complex(&real, 0.1).unwrap();
        assert!(rc.runs.iter().all(|f| f.unit.im == 0.0));

        let basis = sign_basis(3, 1);
        let ie1 = basis.element(0).scale_complex(I);
        let ri = rationalize_complex(&ie1, 0.2).unwrap();
        assert!(ri.runs.iter().all(|f| f.unit == I || f.unit == -I));
        assert!(ri.residual < 0.2);
    }

    #[test]
    fn rejects_complex_input_to_real_lemma() {
        let v = ComplexMatrix::from_rows(&[vec![C64::new(0.0, 1.0)]]).unwrap();
        assert!(rationalize_real(&v, 0.1).is_err());
        assert!(rationalize_real(&ComplexMatrix::from_rows(&[vec![ZERO]]).unwrap(), 0.0).is_err());
    }
}
