//! Perturbing a unitary coupling onto a full-cycle permutation.

use std::f64::consts::{PI, TAU};

use crate::dilation::choose_dilation_horizon;
use crate::error::{Error, Result};
use crate::linalg::{unitary_spectral, ComplexMatrix, PermutationSpec, UnitarySpectrum, C64};
use crate::reservoir::{truncation_tail_bound, Coupling, LinearReservoirSystem};

/// `|1 - e^{iπ/ℓ}|` must undercut `δ` by at least this much, so that grids
/// whose chord rounds to `δ` are not accepted.
pub const CHORD_MARGIN: f64 = 1e-12;

/// Slack when checking that an angle lies in its closed window.
const WINDOW_SLACK: f64 = 1e-9;

/// Margin by which the returned `δ₀` undercuts the target.
const DELTA0_MARGIN: f64 = 1e-12;

const DELTA0_CAP: f64 = 1.0;

/// `|1 - e^{iπ/ℓ}| = 2 sin(π/(2ℓ))`.
pub fn chord(ell: usize) -> f64 {
    2.0 * (PI / (2.0 * ell as f64)).sin()
}

/// Smallest `ℓ₀ ≥ 1` with `|1 - e^{iπ/ℓ₀}| < δ`.
pub fn choose_ell0(delta: f64) -> Result<usize> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("δ must be positive and finite, got {delta}")));
    }
    let accepts = |ell: usize| chord(ell) + CHORD_MARGIN < delta;
    let mut ell = if delta >= 2.0 {
        1
    } else {
        let estimate = PI / (2.0 * (delta / 2.0).asin());
        (estimate.floor() as usize).saturating_sub(1).max(1)
    };
    while ell > 1 && accepts(ell - 1) {
        ell -= 1;
    }
    while !accepts(ell) {
        ell += 1;
    }
    Ok(ell)
}

/// Distinct grid indices `b_j` on the `n1 = ℓ₀·n` roots of unity, one per
/// input angle, each within `1/(2ℓ₀)` turns of its angle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootAssignment {
    pub ell0: usize,
    pub n1: usize,
    pub b: Vec<usize>,
}

impl RootAssignment {
    /// Grid indices not used by any `b_j`, ascending.
    pub fn missing(&self) -> Vec<usize> {
        let mut used = vec![false; self.n1];
        for &b in &self.b {
            used[b] = true;
        }
        (0..self.n1).filter(|&k| !used[k]).collect()
    }

    pub fn root(&self, k: usize) -> C64 {
        root_of_unity(k, self.n1)
    }
}

fn root_of_unity(k: usize, n: usize) -> C64 {
    C64::from_polar(1.0, TAU * (k % n) as f64 / n as f64)
}

fn circular_turn_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Assigns each angle (in turns) a distinct grid point in its window
/// `|a_j·n1 - b| ≤ n/2`, nearest free slot first in sorted order, falling back
/// to augmenting paths if a window is already full.
pub fn assign_distinct_roots(angles: &[f64], ell0: usize) -> Result<RootAssignment> {
    if ell0 == 0 {
        return Err(Error::InvalidArgument("ℓ₀ must be positive".into()));
    }
    if let Some(a) = angles.iter().find(|a| !(0.0..1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!("angle {a} outside [0, 1)")));
    }
    let n = angles.len();
    let n1 = ell0 * n;
    let half = n as f64 / 2.0;
    let candidates: Vec<Vec<usize>> = angles
        .iter()
        .map(|&a| {
            let target = a * n1 as f64;
            let lo = (target - half - WINDOW_SLACK).ceil() as i64;
            let hi = (target + half + WINDOW_SLACK).floor() as i64;
            let mut raw: Vec<i64> = (lo..=hi).collect();
            raw.sort_by(|x, y| {
                ((*x as f64 - target).abs())
                    .total_cmp(&(*y as f64 - target).abs())
                    .then(x.cmp(y))
            });
            let mut out = Vec::with_capacity(raw.len());
            for b in raw {
                let k = b.rem_euclid(n1 as i64) as usize;
                if !out.contains(&k) {
                    out.push(k);
                }
            }
            out
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| angles[i].total_cmp(&angles[j]).then(i.cmp(&j)));

    let mut owner: Vec<Option<usize>> = vec![None; n1];
    let mut b = vec![usize::MAX; n];
    for &j in &order {
        if let Some(&k) = candidates[j].iter().find(|&&k| owner[k].is_none()) {
            owner[k] = Some(j);
            b[j] = k;
            continue;
        }
        let mut visited = vec![false; n1];
        if !augment(j, &candidates, &mut owner, &mut b, &mut visited) {
            return Err(Error::Convergence("no distinct root assignment found".into()));
        }
    }
    Ok(RootAssignment { ell0, n1, b })
}

fn augment(
    j: usize,
    candidates: &[Vec<usize>],
    owner: &mut [Option<usize>],
    b: &mut [usize],
    visited: &mut [bool],
) -> bool {
    for &k in &candidates[j] {
        if std::mem::replace(&mut visited[k], true) {
            continue;
        }
        let free = match owner[k] {
            None => true,
            Some(other) => augment(other, candidates, owner, b, visited),
        };
        if free {
            owner[k] = Some(j);
            b[j] = k;
            return true;
        }
    }
    false
}

/// Explicit data of the perturbation `A = S*·diag(ζ^{b})·S ⊕ D_fill` of a
/// unitary `U = S*·diag(ω)·S` and of the unitary `S2` with `P = S2·A·S2*`,
/// where `P` is the shift `e_j ↦ e_{j+1 mod n1}`.
#[derive(Debug, Clone)]
pub struct CycleRealization {
    pub spectrum: UnitarySpectrum,
    pub assignment: RootAssignment,
    /// `‖A - (U ⊕ D_fill)‖ = max_j |ω_j - ζ^{b_j}|`.
    pub perturbation_norm: f64,
}

impl CycleRealization {
    pub fn n(&self) -> usize {
        self.assignment.b.len()
    }

    pub fn n1(&self) -> usize {
        self.assignment.n1
    }

    /// Grid indices in the order of `A`'s diagonalizing basis: `b` then the
    /// missing ones ascending.
    pub fn column_order(&self) -> Vec<usize> {
        let mut c = self.assignment.b.clone();
        c.extend(self.assignment.missing());
        c
    }

    pub fn dfill(&self) -> ComplexMatrix {
        let roots: Vec<C64> = self.assignment.missing().iter().map(|&k| self.assignment.root(k)).collect();
        ComplexMatrix::from_diagonal(&roots)
    }

    pub fn a(&self) -> ComplexMatrix {
        let s = &self.spectrum.basis;
        let roots: Vec<C64> = self.assignment.b.iter().map(|&k| self.assignment.root(k)).collect();
        let top = &(&s.adjoint() * &ComplexMatrix::from_diagonal(&roots)) * s;
        ComplexMatrix::block_diag(&[&top, &self.dfill()])
    }

    pub fn p(&self) -> PermutationSpec {
        PermutationSpec::shift(self.n1())
    }

    /// Entry `(k, c)` of the Fourier eigenbasis of the shift, `ζ^{-ck}/√n1`.
    fn fourier(&self, k: usize, c: usize) -> C64 {
        let n1 = self.n1();
        let e = (c * k) % n1;
        root_of_unity((n1 - e) % n1, n1) / (n1 as f64).sqrt()
    }

    /// `S2 = Φ_c · (S ⊕ I)`.
    pub fn s2(&self) -> ComplexMatrix {
        let n = self.n();
        let n1 = self.n1();
        let c = self.column_order();
        let phi = ComplexMatrix::from_fn(n1, n1, |k, j| self.fourier(k, c[j]));
        let t = ComplexMatrix::block_diag(&[&self.spectrum.basis, &ComplexMatrix::identity(n1 - n)]);
        &phi * &t
    }

    /// `S2·[V; 0]` without forming `S2`.
    pub fn embed_input(&self, v: &ComplexMatrix) -> ComplexMatrix {
        let n = self.n();
        let b = &self.assignment.b;
        let sv = &self.spectrum.basis * v;
        let phi = ComplexMatrix::from_fn(self.n1(), n, |k, j| self.fourier(k, b[j]));
        &phi * &sv
    }

    /// The first `n` rows of `S2*`, i.e. `S*·(Φ_c*)[0..n, :]`.
    pub fn project_back(&self) -> ComplexMatrix {
        let b = &self.assignment.b;
        let rows = ComplexMatrix::from_fn(self.n(), self.n1(), |j, k| self.fourier(k, b[j]).conj());
        &self.spectrum.basis.adjoint() * &rows
    }
}

/// [`perturb_with_ell0`] at the coarsest grid meeting `δ`.
pub fn perturb_to_cycle(u: &ComplexMatrix, delta: f64) -> Result<CycleRealization> {
    let ell0 = choose_ell0(delta)?;
    let r = perturb_with_ell0(u, ell0)?;
    if !(r.perturbation_norm < delta) {
        return Err(Error::Convergence(format!(
            "eigenvalue rounding moved by {} ≥ δ = {delta}",
            r.perturbation_norm
        )));
    }
    Ok(r)
}

/// Rounds the spectrum of `U` onto the `ℓ₀·n`-th roots of unity.
pub fn perturb_with_ell0(u: &ComplexMatrix, ell0: usize) -> Result<CycleRealization> {
    let spectrum = unitary_spectral(u)?;
    let turns = spectrum.turns();
    let assignment = assign_distinct_roots(&turns, ell0)?;
    for (a, &b) in turns.iter().zip(&assignment.b) {
        let dev = circular_turn_distance(*a, b as f64 / assignment.n1 as f64);
        if dev > 1.0 / (2.0 * ell0 as f64) + WINDOW_SLACK {
            return Err(Error::Convergence(format!("root assignment drifted {dev} turns")));
        }
    }
    let perturbation_norm = spectrum
        .eigenvalues
        .iter()
        .zip(&assignment.b)
        .map(|(w, &b)| (w - assignment.root(b)).norm())
        .fold(0.0, f64::max);
    Ok(CycleRealization {
        spectrum,
        assignment,
        perturbation_norm,
    })
}

/// `M·‖V‖·Σ_{k=0}^{N} ((λ+δ₀)^k - λ^k)`.
pub fn finite_horizon_drift(lambda: f64, horizon: usize, bound: f64, norm_v: f64, delta0: f64) -> f64 {
    let (mut a, mut b, mut sum) = (1.0, 1.0, 0.0);
    for _ in 0..horizon {
        a *= lambda + delta0;
        b *= lambda;
        sum += a - b;
    }
    bound * norm_v * sum
}

/// A `δ₀ ∈ (0, 1]` with `M‖V‖Σ_{k=0}^{N}((λ+δ₀)^k - λ^k) < δ/2`, found by
/// bisection.
pub fn choose_delta0(lambda: f64, horizon: usize, bound: f64, norm_v: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("λ must lie in [0, 1), got {lambda}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
    }
    let tail = truncation_tail_bound(lambda, norm_v, bound, horizon as u64)?;
    if !(tail < delta / 2.0) {
        return Err(Error::Precondition(format!(
            "tail bound {tail} at horizon {horizon} is not below δ/2 = {}",
            delta / 2.0
        )));
    }
    let target = delta / 2.0 - DELTA0_MARGIN;
    let ok = |d0: f64| finite_horizon_drift(lambda, horizon, bound, norm_v, d0) < target;
    if ok(DELTA0_CAP) {
        return Ok(DELTA0_CAP);
    }
    let (mut lo, mut hi) = (0.0, DELTA0_CAP);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 && ok(lo) {
        Ok(lo)
    } else {
        Err(Error::Convergence(format!("no positive δ₀ found for δ = {delta}")))
    }
}

/// Parameters of a cyclization, computable before any decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclizationPlan {
    /// Horizon re-derived for the tail condition at `δ/2`.
    pub horizon: usize,
    pub delta0: f64,
    /// `min(δ, δ₀)/λ`, the tolerance handed to the eigenvalue rounding.
    pub grid_delta: f64,
    pub ell0: usize,
    pub n1: u128,
}

pub fn plan_cyclization(lambda: f64, norm_v: f64, bound: f64, n: usize, delta: f64) -> Result<CyclizationPlan> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition("cyclization needs λ > 0".into()));
    }
    let horizon = choose_dilation_horizon(lambda, norm_v, bound, delta / 2.0)?;
    let delta0 = choose_delta0(lambda, horizon, bound, norm_v, delta)?;
    let grid_delta = delta.min(delta0) / lambda;
    let ell0 = choose_ell0(grid_delta)?;
    Ok(CyclizationPlan {
        horizon,
        delta0,
        grid_delta,
        ell0,
        n1: ell0 as u128 * n as u128,
    })
}

/// Best bound on `sup_t ‖x^A_t - x_t‖` when the coupling moves by `drift`
/// in operator norm while both stay within norm `λ`, minimised over the
/// split horizon.
pub fn cyclization_state_bound(lambda: f64, norm_v: f64, bound: f64, drift: f64) -> f64 {
    if bound * norm_v == 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let mut finite = 0.0;
    let (mut a, mut b) = (1.0, 1.0);
    for horizon in 0..1_000_000u64 {
        if horizon > 0 {
            a *= lambda + drift;
            b *= lambda;
            finite += bound * norm_v * (a - b);
        }
        let tail = 2.0 * bound * norm_v * lambda.powi((horizon + 1).min(i32::MAX as u64) as i32) / (1.0 - lambda);
        best = best.min(finite + tail);
        if finite >= best || tail < best * 1e-16 {
            break;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Cyclization {
    pub system: LinearReservoirSystem,
    pub ell0: usize,
    pub n1: usize,
    /// `‖A - (U ⊕ D_fill)‖`, before scaling by `λ`.
    pub perturbation_norm: f64,
    /// Bound on the state deviation from the input system.
    pub state_error_bound: f64,
    pub plan: Option<CyclizationPlan>,
}

/// Replaces `(λU, V, h)` by `(λP, S2·[V; 0], h∘J*∘S2*)` with `P` a full
/// cycle, keeping states within `δ` of the original on `M`-bounded streams.
pub fn cyclize_system(r: &LinearReservoirSystem, delta: f64, bound: f64) -> Result<Cyclization> {
    let plan = plan_cyclization(r.lambda(), r.input_norm()?, bound, r.n(), delta)?;
    let mut c = cyclize_with_ell0(r, plan.ell0, bound)?;
    if !(c.perturbation_norm < plan.grid_delta) {
        return Err(Error::Convergence(format!(
            "eigenvalue rounding moved by {} ≥ {}",
            c.perturbation_norm, plan.grid_delta
        )));
    }
    c.plan = Some(plan);
    Ok(c)
}

/// Cyclization on a caller-chosen grid `n1 = ℓ₀·n`.
pub fn cyclize_with_ell0(r: &LinearReservoirSystem, ell0: usize, bound: f64) -> Result<Cyclization> {
    let lambda = r.lambda();
    if !(lambda > 0.0) {
        return Err(Error::Precondition("cyclization needs λ > 0".into()));
    }
    let u = r.w_dense().scale(1.0 / lambda);
    let real = perturb_with_ell0(&u, ell0)?;
    let n1 = real.n1();
    let v = real.embed_input(r.v());
    let readout = r.readout().compose(&real.project_back())?;
    let system = LinearReservoirSystem::with_coupling(Coupling::scaled_permutation(lambda, real.p()), v, readout)?;
    let state_error_bound = cyclization_state_bound(lambda, r.input_norm()?, bound, lambda * real.perturbation_norm);
    Ok(Cyclization {
        system,
        ell0,
        n1,
        perturbation_norm: real.perturbation_norm,
        state_error_bound,
        plan: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ONE, ZERO};
    use crate::linalg::{eigenvalues, angle_turns, is_full_cycle, operator_norm, unitarity_residual, vec_norm, vec_sub};
    use crate::random::{complex_gaussian, random_complex_matrix, random_unitary};
    use crate::reservoir::{InputStream, Readout};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ell0_examples() {
        assert_eq!(choose_ell0(2.1).unwrap(), 1);
        assert_eq!(choose_ell0(1.0).unwrap(), 4);
        assert_eq!(choose_ell0(0.5).unwrap(), 7);
        assert!(choose_ell0(0.0).is_err());
        let mut prev = 1;
        for k in 1..400 {
            let ell = choose_ell0(2.5 / k as f64).unwrap();
            assert!(ell >= prev);
            assert!(chord(ell) < 2.5 / k as f64);
            assert!(ell == 1 || chord(ell - 1) + CHORD_MARGIN >= 2.5 / k as f64);
            prev = ell;
        }
    }

    #[test]
    fn assignment_examples() {
        assert_eq!(assign_distinct_roots(&[0.0], 5).unwrap().b, vec![0]);
        let r = assign_distinct_roots(&[0.0, 0.5], 3).unwrap();
        assert_eq!((r.n1, r.b.clone()), (6, vec![0, 3]));
        let r = assign_distinct_roots(&[0.25, 0.25], 2).unwrap();
        assert_eq!(r.b[0], 1);
        assert!(r.b[1] == 0 || r.b[1] == 2);
        assert_eq!(r.missing().len(), 2);
    }

    #[test]
    fn assignment_handles_clustered_angles() {
        // many equal angles force the window to fill completely
        for n in 1..12 {
            for ell0 in 1..4 {
                let angles = vec![0.999; n];
                let r = assign_distinct_roots(&angles, ell0).unwrap();
                let mut sorted = r.b.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), n);
                for &b in &r.b {
                    let d = circular_turn_distance(0.999, b as f64 / r.n1 as f64);
                    assert!(d <= 1.0 / (2.0 * ell0 as f64) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn scalar_identity_on_seven_roots() {
        let c = perturb_to_cycle(&ComplexMatrix::identity(1), 0.5).unwrap();
        assert_eq!(c.assignment.ell0, 7);
        assert_eq!(c.n1(), 7);
        assert_eq!(c.perturbation_norm, 0.0);
        let fill = c.dfill().diagonal();
        assert_eq!(fill.len(), 6);
        for (k, z) in fill.iter().enumerate() {
            assert!((z - root_of_unity(k + 1, 7)).norm() < 1e-15);
        }
    }

    #[test]
    fn swap_needs_no_perturbation() {
        let swap = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = perturb_to_cycle(&swap, 0.1).unwrap();
        assert!(c.perturbation_norm < 1e-12);
    }

    #[test]
    fn random_unitary_realization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = random_unitary(&mut rng, 3);
        let c = perturb_to_cycle(&u, 0.3).unwrap();
        let a = c.a();
        let n1 = c.n1();
        let fill = c.dfill();
        let base = ComplexMatrix::block_diag(&[&u, &fill]);
        let pert = operator_norm(&(&a - &base)).unwrap();
        assert!(pert < 0.3);
        assert!((pert - c.perturbation_norm).abs() < 1e-10);
        assert!((&a.pow(n1 as u32) - &ComplexMatrix::identity(n1)).max_abs() < 1e-7);

        let mut turns: Vec<f64> = eigenvalues(&a).unwrap().into_iter().map(angle_turns).collect();
        turns.sort_by(f64::total_cmp);
        for (k, t) in turns.iter().enumerate() {
            let d = circular_turn_distance(*t, k as f64 / n1 as f64);
            assert!(d * TAU < 1e-7, "eigenvalue {k} off grid by {d}");
        }

        let s2 = c.s2();
        assert!(unitarity_residual(&s2) < 1e-9);
        let p = &(&s2 * &a) * &s2.adjoint();
        assert!((&p - &c.p().matrix()).max_abs() < 1e-8);
        assert!(is_full_cycle(&c.p()));

        let v = random_complex_matrix(&mut rng, 3, 2);
        let full = &s2 * &ComplexMatrix::vstack(&[&v, &ComplexMatrix::zeros(n1 - 3, 2)]).unwrap();
        assert!((&full - &c.embed_input(&v)).max_abs() < 1e-12);
        assert!((&s2.adjoint().block(0, 0, 3, n1) - &c.project_back()).max_abs() < 1e-12);
    }

    #[test]
    fn delta0_examples() {
        let d0 = choose_delta0(0.5, 5, 1.0, 1.0, 0.2).unwrap();
        assert!(d0 > 0.0);
        assert!(finite_horizon_drift(0.5, 5, 1.0, 1.0, d0) < 0.1);
        assert!(finite_horizon_drift(0.5, 5, 1.0, 1.0, d0 * 1.01) >= 0.1 - 1e-9);
        assert_eq!(choose_delta0(0.5, 5, 0.0, 1.0, 0.2).unwrap(), 1.0);
        let wide = choose_delta0(0.5, 8, 1.0, 1.0, 0.2).unwrap();
        let narrow = choose_delta0(0.5, 8, 1.0, 1.0, 0.1).unwrap();
        assert!(narrow <= wide);
        assert!(matches!(choose_delta0(0.5, 2, 1.0, 1.0, 0.2), Err(Error::Precondition(_))));
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

    #[test]
    fn aligned_cycle_is_reproduced_exactly() {
        // λ times a 4-cycle has eigenvalues on the 4th roots, which lie on every finer grid of multiples of 4
        let p = PermutationSpec::shift(4);
        let r = LinearReservoirSystem::with_coupling(
            Coupling::Dense(p.matrix().scale(0.5)),
            ComplexMatrix::from_real_rows(&[vec![1.0], vec![0.0], vec![0.0], vec![0.0]]).unwrap(),
            Readout::identity(4),
        )
        .unwrap();
        let c = cyclize_with_ell0(&r, 2, 1.0).unwrap();
        assert!(c.perturbation_norm < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = stream(&mut rng, 1, 40);
        for (a, b) in r.outputs(&u).unwrap().iter().zip(&c.system.outputs(&u).unwrap()) {
            assert!(vec_norm(&vec_sub(a, b)) < 1e-8);
        }
    }

    #[test]
    fn scalar_cyclization_is_close() {
        let r = LinearReservoirSystem::new(
            ComplexMatrix::from_real_rows(&[vec![0.5]]).unwrap(),
            ComplexMatrix::identity(1),
            Readout::identity(1),
        )
        .unwrap();
        let c = cyclize_system(&r, 0.3, 1.0).unwrap();
        let plan = c.plan.unwrap();
        assert_eq!(c.n1 as u128, plan.n1);
        assert!(c.state_error_bound < 0.3);
        let (lambda, cyc) = c.system.coupling().as_scaled_full_cycle().unwrap();
        assert_eq!(lambda, 0.5);
        assert_eq!(cyc.size(), c.n1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let u = stream(&mut rng, 1, 40);
            for (a, b) in r.outputs(&u).unwrap().iter().zip(&c.system.outputs(&u).unwrap()) {
                assert!(vec_norm(&vec_sub(a, b)) < 0.3);
            }
        }
    }

    #[test]
    fn similarity_to_the_perturbed_system_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = random_unitary(&mut rng, 3);
        let v = random_complex_matrix(&mut rng, 3, 2);
        let h = Readout::linear(random_complex_matrix(&mut rng, 2, 3));
        let r = LinearReservoirSystem::new(u.scale(0.8), v.clone(), h.clone()).unwrap();
        let c = cyclize_with_ell0(&r, 3, 1.0).unwrap();
        let real = perturb_with_ell0(&u, 3).unwrap();
        let n1 = real.n1();
        let proj = ComplexMatrix::from_fn(3, n1, |i, j| if i == j { ONE } else { ZERO });
        let ra = LinearReservoirSystem::new(
            real.a().scale(0.8),
            ComplexMatrix::vstack(&[&v, &ComplexMatrix::zeros(n1 - 3, 2)]).unwrap(),
            h.compose(&proj).unwrap(),
        )
        .unwrap();
        let s = stream(&mut rng, 2, 60);
        for (a, b) in ra.outputs(&s).unwrap().iter().zip(&c.system.outputs(&s).unwrap()) {
            assert!(vec_norm(&vec_sub(a, b)) < 1e-8);
        }
    }

    #[test]
    fn state_bound_is_monotone_in_drift() {
        let a = cyclization_state_bound(0.7, 1.0, 1.0, 0.01);
        let b = cyclization_state_bound(0.7, 1.0, 1.0, 0.02);
        assert!(a < b);
        assert!(cyclization_state_bound(0.7, 1.0, 1.0, 0.0) < 1e-12);
        assert_eq!(cyclization_state_bound(0.7, 0.0, 1.0, 0.1), 0.0);
    }
}
