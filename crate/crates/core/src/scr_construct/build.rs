use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, PermutationSpec, C64, I, ONE, ZERO};
use crate::reservoir::{Coupling, LinearReservoirSystem, Modulus};

use super::basis::sign_basis;
use super::cycle::block_cycle;
use super::rational::{
    rational_denominator, rationalize_complex, rationalize_complex_with_denominator, rationalize_real,
    rationalize_real_with_denominator, Rationalization,
};

/// Default cap on constructed state dimensions.
pub const DEFAULT_MAX_DIM: usize = 200_000;

/// Cap on the entry count of any dense matrix a constructor materializes.
pub const DENSE_ENTRY_CAP: u128 = 1 << 25;

/// State tolerances converted from `ε` never exceed this, so every state the
/// readout sees stays within one unit of the reachable ball.
pub const STATE_DELTA_CAP: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub max_dim: usize,
    /// Overrides the readout's own Lipschitz bound.
    pub modulus: Option<Modulus>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_dim: DEFAULT_MAX_DIM,
            modulus: None,
        }
    }
}

pub(crate) fn check_dim(stage: &str, required: u128, cap: usize) -> Result<usize> {
    if required > cap as u128 {
        return Err(Error::DimensionCap {
            stage: stage.to_string(),
            required,
            cap,
        });
    }
    Ok(required as usize)
}

pub(crate) fn check_dense(stage: &str, rows: u128, cols: u128) -> Result<()> {
    let entries = rows * cols;
    if entries > DENSE_ENTRY_CAP {
        return Err(Error::DimensionCap {
            stage: format!("{stage} (dense {rows}x{cols})"),
            required: entries,
            cap: DENSE_ENTRY_CAP as usize,
        });
    }
    Ok(())
}

fn full_cycle(r: &LinearReservoirSystem) -> Result<(f64, PermutationSpec)> {
    r.coupling()
        .as_scaled_full_cycle()
        .map(|(s, p)| (s, p.clone()))
        .ok_or_else(|| Error::Precondition("coupling is not a scaled full-cycle permutation".into()))
}

fn check_bound(bound: f64) -> Result<()> {
    if bound.is_finite() && bound > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("input bound M must be positive, got {bound}")))
    }
}

/// `ε ↦ δ` for the readout of `r`, on the reachable ball widened by
/// [`STATE_DELTA_CAP`].
pub fn state_delta(r: &LinearReservoirSystem, epsilon: f64, bound: f64, modulus: Option<&Modulus>) -> Result<(f64, Modulus)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {epsilon}")));
    }
    let radius = r.state_radius(bound)? + STATE_DELTA_CAP;
    let m = Modulus::resolve(r.readout(), radius, modulus)?;
    Ok((m.delta_for(epsilon, STATE_DELTA_CAP)?, m))
}

/// `[a_1 I, …, a_k I]` as an `n × nk` matrix.
fn tiled_identity(n: usize, weights: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n * weights.len(), |i, j| if j % n == i { weights[j / n] } else { ZERO })
}

fn stacked_factors(r: &Rationalization) -> ComplexMatrix {
    let (n, m) = (r.n(), r.m());
    let basis = r.basis;
    let mut out = ComplexMatrix::zeros(n * r.k as usize, m);
    let mut block = 0;
    for run in &r.runs {
        for _ in 0..run.copies {
            for i in 0..n {
                for j in 0..m {
                    out[(block * n + i, j)] = run.unit * basis.entry(run.basis_index, i * m + j);
                }
            }
            block += 1;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SmcrBuild {
    pub system: LinearReservoirSystem,
    /// Coefficients of `V` in the sign basis.
    pub coefficients: Vec<C64>,
}

/// Exact SMCR equivalent of `(λP, V, h)`: `nm` copies of `λP`, inputs
/// `[E_1; …; E_nm]`, readout `h(Σ a_i x^{(i)})`.
pub fn build_smcr(r: &LinearReservoirSystem, max_dim: usize) -> Result<SmcrBuild> {
    let (lambda, p) = full_cycle(r)?;
    let (n, m) = (r.n(), r.m());
    let dim = check_dim("smcr", n as u128 * n as u128 * m as u128, max_dim)?;
    check_dense("smcr readout", n as u128, dim as u128)?;
    let basis = sign_basis(n, m);
    let coefficients = basis.expand(r.v())?;
    let elements = basis.elements();
    let refs: Vec<&ComplexMatrix> = elements.iter().collect();
    let v = ComplexMatrix::vstack(&refs)?;
    let readout = r.readout().compose(&tiled_identity(n, &coefficients))?;
    let coupling = Coupling::PermutationBlocks {
        scale: lambda,
        blocks: vec![p; n * m],
    };
    Ok(SmcrBuild {
        system: LinearReservoirSystem::with_coupling(coupling, v, readout)?,
        coefficients,
    })
}

#[derive(Debug, Clone)]
pub struct CscrBuild {
    pub system: LinearReservoirSystem,
    pub rationalization: Rationalization,
    /// `M·residual/(1-λ)`.
    pub state_error_bound: f64,
}

/// Rationalization tolerance `(1-λ)δ/M` for a state tolerance `δ`.
pub fn input_tolerance(lambda: f64, state_delta: f64, bound: f64) -> f64 {
    (1.0 - lambda) * state_delta / bound
}

/// ℂ-SCR `ε`-close to `(λP, V, h)` on `M`-bounded streams.
pub fn build_cscr(r: &LinearReservoirSystem, epsilon: f64, bound: f64, opts: &BuildOptions) -> Result<CscrBuild> {
    let (delta, _) = state_delta(r, epsilon, bound, opts.modulus.as_ref())?;
    build_cscr_with_delta(r, delta, bound, opts.max_dim)
}

/// ℂ-SCR whose states stay within `δ` of those of `r`.
pub fn build_cscr_with_delta(r: &LinearReservoirSystem, delta: f64, bound: f64, max_dim: usize) -> Result<CscrBuild> {
    check_bound(bound)?;
    let tol = input_tolerance(r.lambda(), delta, bound);
    let basis = sign_basis(r.n(), r.m());
    let denominator = rational_denominator(&basis, tol / 2.0)?;
    check_dim("cscr", estimate_factor_count(r.v(), denominator, true)? * r.n() as u128, max_dim)?;
    let rat = rationalize_complex(r.v(), tol)?;
    cscr_from_rationalization(r, rat, bound, max_dim)
}

/// ℂ-SCR at a caller-chosen denominator; the residual is reported, not enforced.
pub fn build_cscr_with_denominator(r: &LinearReservoirSystem, denominator: u64, bound: f64, max_dim: usize) -> Result<CscrBuild> {
    check_bound(bound)?;
    check_dim("cscr", estimate_factor_count(r.v(), denominator, true)? * r.n() as u128, max_dim)?;
    let rat = rationalize_complex_with_denominator(r.v(), denominator)?;
    cscr_from_rationalization(r, rat, bound, max_dim)
}

/// Upper bound on `k` before any factor list is formed: `Σ|N·a_i| + nm + n`.
fn estimate_factor_count(v: &ComplexMatrix, denominator: u64, complex: bool) -> Result<u128> {
    let basis = sign_basis(v.rows(), v.cols());
    let a = basis.expand(v)?;
    let total: f64 = a
        .iter()
        .map(|z| if complex { z.re.abs() + z.im.abs() } else { z.re.abs() })
        .sum::<f64>()
        * denominator as f64;
    let slack = 2 * basis.len() as u128 + v.rows() as u128;
    if !(total < 1e30) {
        return Ok(u128::MAX / 4);
    }
    Ok(total.ceil() as u128 + slack)
}

fn cscr_from_rationalization(r: &LinearReservoirSystem, rat: Rationalization, bound: f64, max_dim: usize) -> Result<CscrBuild> {
    let (lambda, p) = full_cycle(r)?;
    let n = r.n();
    let k = rat.k as usize;
    let dim = check_dim("cscr", n as u128 * rat.k as u128, max_dim)?;
    check_dense("cscr readout", n as u128, dim as u128)?;
    check_dense("cscr input", dim as u128, r.m() as u128)?;
    let cycle = block_cycle(&p, k)?;
    let v = stacked_factors(&rat);
    let w = C64::new(1.0 / rat.denominator as f64, 0.0);
    let readout = r.readout().compose(&tiled_identity(n, &vec![w; k]))?;
    let system = LinearReservoirSystem::with_coupling(Coupling::scaled_permutation(lambda, cycle), v, readout)?;
    let state_error_bound = bound * rat.residual / (1.0 - lambda);
    Ok(CscrBuild {
        system,
        rationalization: rat,
        state_error_bound,
    })
}

#[derive(Debug, Clone)]
pub struct TwinBuild {
    pub system: LinearReservoirSystem,
    pub real: Rationalization,
    pub imag: Rationalization,
    /// `M·(residual_r + residual_i)/(1-λ)`.
    pub state_error_bound: f64,
}

/// Twin SCR `ε`-close to `(λP, V, h)` on `M`-bounded streams.
pub fn build_twin_scr(r: &LinearReservoirSystem, epsilon: f64, bound: f64, opts: &BuildOptions) -> Result<TwinBuild> {
    let (delta, _) = state_delta(r, epsilon, bound, opts.modulus.as_ref())?;
    build_twin_with_delta(r, delta, bound, opts.max_dim)
}

/// Twin SCR whose combined states stay within `δ` of those of `r`.
pub fn build_twin_with_delta(r: &LinearReservoirSystem, delta: f64, bound: f64, max_dim: usize) -> Result<TwinBuild> {
    check_bound(bound)?;
    let tol = input_tolerance(r.lambda(), delta, bound) / 2.0;
    let basis = sign_basis(r.n(), r.m());
    let denominator = rational_denominator(&basis, tol)?;
    let estimate = estimate_factor_count(&r.v().re(), denominator, false)? + estimate_factor_count(&r.v().im(), denominator, false)?;
    check_dim("twin", estimate * r.n() as u128, max_dim)?;
    let real = rationalize_real(&r.v().re(), tol)?;
    let imag = rationalize_real(&r.v().im(), tol)?;
    twin_from_rationalizations(r, real, imag, bound, max_dim)
}

/// Twin SCR with both branches at a caller-chosen denominator.
pub fn build_twin_with_denominator(r: &LinearReservoirSystem, denominator: u64, bound: f64, max_dim: usize) -> Result<TwinBuild> {
    check_bound(bound)?;
    let estimate = estimate_factor_count(&r.v().re(), denominator, false)? + estimate_factor_count(&r.v().im(), denominator, false)?;
    check_dim("twin", estimate * r.n() as u128, max_dim)?;
    let real = rationalize_real_with_denominator(&r.v().re(), denominator)?;
    let imag = rationalize_real_with_denominator(&r.v().im(), denominator)?;
    twin_from_rationalizations(r, real, imag, bound, max_dim)
}

fn twin_from_rationalizations(
    r: &LinearReservoirSystem,
    real: Rationalization,
    imag: Rationalization,
    bound: f64,
    max_dim: usize,
) -> Result<TwinBuild> {
    let (lambda, p) = full_cycle(r)?;
    let n = r.n();
    let (kr, ki) = (real.k as usize, imag.k as usize);
    let dim = check_dim("twin", n as u128 * (real.k as u128 + imag.k as u128), max_dim)?;
    check_dense("twin readout", n as u128, dim as u128)?;
    check_dense("twin input", dim as u128, r.m() as u128)?;
    let coupling = Coupling::PermutationBlocks {
        scale: lambda,
        blocks: vec![block_cycle(&p, kr)?, block_cycle(&p, ki)?],
    };
    let v = ComplexMatrix::vstack(&[&stacked_factors(&real), &stacked_factors(&imag)])?;
    let mut weights = vec![ONE / real.denominator as f64; kr];
    weights.extend(std::iter::repeat_n(I / imag.denominator as f64, ki));
    let readout = r.readout().compose(&tiled_identity(n, &weights))?;
    let system = LinearReservoirSystem::with_coupling(coupling, v, readout)?;
    let state_error_bound = bound * (real.residual + imag.residual) / (1.0 - lambda);
    Ok(TwinBuild {
        system,
        real,
        imag,
        state_error_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_full_cycle, vec_norm, vec_sub};
    use crate::random::{complex_gaussian, random_complex_matrix};
    use crate::reservoir::{InputStream, Readout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cycle_system(rng: &mut ChaCha8Rng, n: usize, m: usize, lambda: f64) -> LinearReservoirSystem {
        let v = random_complex_matrix(rng, n, m);
        LinearReservoirSystem::with_coupling(
            Coupling::scaled_permutation(lambda, PermutationSpec::shift(n)),
            v,
            Readout::identity(n),
        )
        .unwrap()
    }

    fn stream(rng: &mut ChaCha8Rng, m: usize, len: usize) -> InputStream {
        let samples = (0..len)
            .map(|_| {
                let c: Vec<C64> = (0..m).map(|_| complex_gaussian(rng)).collect();
                let norm = vec_norm(&c).max(1.0);
                c.into_iter().map(|z| z / norm).collect()
            })
            .collect();
        InputStream::new(m, 1.0, samples).unwrap()
    }

    fn max_dev(a: &LinearReservoirSystem, b: &LinearReservoirSystem, u: &InputStream) -> f64 {
        a.outputs(u)
            .unwrap()
            .iter()
            .zip(&b.outputs(u).unwrap())
            .map(|(x, y)| vec_norm(&vec_sub(x, y)))
            .fold(0.0, f64::max)
    }

    #[test]
    fn smcr_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let r = cycle_system(&mut rng, 2, 1, 0.7);
        let s = build_smcr(&r, DEFAULT_MAX_DIM).unwrap();
        assert_eq!(s.system.n(), 4);
        for _ in 0..20 {
            let u = stream(&mut rng, 1, 50);
            assert!(max_dev(&r, &s.system, &u) < 1e-11);
        }
        let r1 = LinearReservoirSystem::new(
            ComplexMatrix::from_real_rows(&[vec![0.3]]).unwrap(),
            ComplexMatrix::from_rows(&[vec![C64::new(0.4, -0.2)]]).unwrap(),
            Readout::identity(1),
        )
        .unwrap();
        let s1 = build_smcr(&r1, 10).unwrap();
        assert_eq!(s1.system.v().row_major(), vec![ONE]);
        assert_eq!(s1.coefficients, vec![C64::new(0.4, -0.2)]);
    }

    #[test]
    fn smcr_requires_cycle() {
        let r = LinearReservoirSystem::new(ComplexMatrix::identity(2).scale(0.5), ComplexMatrix::identity(2), Readout::identity(2)).unwrap();
        assert!(matches!(build_smcr(&r, 100), Err(Error::Precondition(_))));
    }

    #[test]
    fn cscr_close_and_structured() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let r = cycle_system(&mut rng, 2, 1, 0.5);
        let c = build_cscr(&r, 0.2, 1.0, &BuildOptions::default()).unwrap();
        assert!(c.state_error_bound < 0.2);
        assert_eq!(c.system.n() as u64, 2 * c.rationalization.k);
        let (lambda, p) = c.system.coupling().as_scaled_full_cycle().unwrap();
        assert_eq!(lambda, 0.5);
        assert!(is_full_cycle(p));
        assert!(c.system.v().row_major().iter().all(|z| [ONE, -ONE, I, -I].contains(z)));
        for _ in 0..20 {
            let u = stream(&mut rng, 1, 60);
            assert!(max_dev(&r, &c.system, &u) < 0.2);
        }
    }

    #[test]
    fn cscr_exact_when_v_is_a_sign_matrix() {
        let r = LinearReservoirSystem::with_coupling(
            Coupling::scaled_permutation(0.5, PermutationSpec::shift(3)),
            ComplexMatrix::from_real_rows(&[vec![1.0], vec![1.0], vec![-1.0]]).unwrap(),
            Readout::identity(3),
        )
        .unwrap();
        let c = build_cscr_with_denominator(&r, 1, 1.0, 100).unwrap();
        assert_eq!(c.rationalization.k, 1);
        assert!(c.rationalization.residual < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(max_dev(&r, &c.system, &stream(&mut rng, 1, 30)) < 1e-14);
    }

    #[test]
    fn twin_close_and_structured() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let r = cycle_system(&mut rng, 2, 1, 0.5);
        let t = build_twin_scr(&r, 0.2, 1.0, &BuildOptions::default()).unwrap();
        assert!(t.state_error_bound < 0.2);
        let Coupling::PermutationBlocks { scale, blocks } = t.system.coupling() else {
            panic!("twin coupling must be structured");
        };
        assert_eq!(*scale, 0.5);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].size() as u64, 2 * t.real.k);
        assert_eq!(blocks[1].size() as u64, 2 * t.imag.k);
        assert!(blocks.iter().all(is_full_cycle));
        assert!(t.system.v().row_major().iter().all(|z| *z == ONE || *z == -ONE));
        for _ in 0..20 {
            let u = stream(&mut rng, 1, 60);
            assert!(max_dev(&r, &t.system, &u) < 0.2);
        }
    }

    #[test]
    fn twin_with_real_input_pads_imaginary_branch() {
        let r = LinearReservoirSystem::with_coupling(
            Coupling::scaled_permutation(0.5, PermutationSpec::shift(2)),
            ComplexMatrix::from_real_rows(&[vec![0.3], vec![-0.7]]).unwrap(),
            Readout::identity(2),
        )
        .unwrap();
        let t = build_twin_with_delta(&r, 0.1, 1.0, DEFAULT_MAX_DIM).unwrap();
        assert_eq!((t.imag.k0, t.imag.k), (0, 1));
    }

    #[test]
    fn dimension_cap_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let r = cycle_system(&mut rng, 3, 2, 0.9);
        match build_cscr_with_delta(&r, 1e-6, 1.0, 1000) {
            Err(Error::DimensionCap { stage, required, cap }) => {
                assert_eq!(stage, "cscr");
                assert!(required > 1000);
                assert_eq!(cap, 1000);
            }
            other => panic!("expected a cap error, got {other:?}"),
        }
        assert!(matches!(build_smcr(&r, 10), Err(Error::DimensionCap { .. })));
    }
}
