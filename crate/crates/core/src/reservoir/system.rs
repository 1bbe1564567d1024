use crate::error::{mismatch, Error, Result};
use crate::linalg::{inverse, is_full_cycle, operator_norm, vec_norm, ComplexMatrix, PermutationSpec, C64, ZERO};

use super::readout::Readout;

/// Relative slack allowed when checking `‖c_t‖ ≤ M`.
const BOUND_SLACK: f64 = 1e-12;

/// State coupling matrix `W`.
///
/// Permutation couplings are kept structured so very large cycle reservoirs
/// can be simulated without forming a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Dense(ComplexMatrix),
    /// `scale · (P_1 ⊕ P_2 ⊕ …)`.
    PermutationBlocks {
        scale: f64,
        blocks: Vec<PermutationSpec>,
    },
}

impl Coupling {
    pub fn scaled_permutation(scale: f64, p: PermutationSpec) -> Self {
        Self::PermutationBlocks {
            scale,
            blocks: vec![p],
        }
    }

    /// Wraps a dense matrix, recognising exact nonnegative multiples of
    /// permutation matrices.
    pub fn from_dense(w: ComplexMatrix) -> Self {
        match detect_scaled_permutation(&w) {
            Some((scale, p)) => Self::scaled_permutation(scale, p),
            None => Self::Dense(w),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(w) => w.rows(),
            Self::PermutationBlocks { blocks, .. } => blocks.iter().map(PermutationSpec::size).sum(),
        }
    }

    pub fn operator_norm(&self) -> Result<f64> {
        match self {
            Self::Dense(w) => operator_norm(w),
            Self::PermutationBlocks { scale, blocks } => {
                Ok(if blocks.iter().all(|b| b.size() == 0) { 0.0 } else { scale.abs() })
            }
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        match self {
            Self::Dense(w) => w.matvec(x),
            Self::PermutationBlocks { scale, blocks } => {
                let mut y = vec![ZERO; x.len()];
                let mut off = 0;
                for b in blocks {
                    for (i, &j) in b.image().iter().enumerate() {
                        y[off + j] = x[off + i] * *scale;
                    }
                    off += b.size();
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        match self {
            Self::Dense(w) => w.clone(),
            Self::PermutationBlocks { scale, blocks } => {
                let mats: Vec<ComplexMatrix> = blocks.iter().map(|b| b.matrix().scale(*scale)).collect();
                let refs: Vec<&ComplexMatrix> = mats.iter().collect();
                ComplexMatrix::block_diag(&refs)
            }
        }
    }

    /// `Some((λ, σ))` when the coupling is `λ·P_σ` for a single full cycle σ.
    pub fn as_scaled_full_cycle(&self) -> Option<(f64, &PermutationSpec)> {
        match self {
            Self::PermutationBlocks { scale, blocks } if blocks.len() == 1 && is_full_cycle(&blocks[0]) => {
                Some((*scale, &blocks[0]))
            }
            _ => None,
        }
    }

    /// Single permutation σ with `W = scale·P_σ`, merging blocks.
    pub fn as_scaled_permutation(&self) -> Option<(f64, PermutationSpec)> {
        let Self::PermutationBlocks { scale, blocks } = self else {
            return None;
        };
        let mut image = Vec::with_capacity(self.dim());
        let mut off = 0;
        for b in blocks {
            image.extend(b.image().iter().map(|&j| j + off));
            off += b.size();
        }
        Some((*scale, PermutationSpec::new(image).ok()?))
    }
}

fn detect_scaled_permutation(w: &ComplexMatrix) -> Option<(f64, PermutationSpec)> {
    if !w.is_square() || w.rows() == 0 {
        return None;
    }
    let n = w.rows();
    let mut scale = None;
    let mut image = Vec::with_capacity(n);
    for i in 0..n {
        let mut hit = None;
        for r in 0..n {
            let z = w[(r, i)];
            if z == ZERO {
                continue;
            }
            if z.im != 0.0 || z.re <= 0.0 || hit.replace(r).is_some() {
                return None;
            }
            match scale {
                None => scale = Some(z.re),
                Some(s) if s != z.re => return None,
                Some(_) => {}
            }
        }
        image.push(hit?);
    }
    Some((scale?, PermutationSpec::new(image).ok()?))
}

/// Bounded input stream `c_1, …, c_L` (most recent last).
#[derive(Debug, Clone, PartialEq)]
pub struct InputStream {
    m: usize,
    bound: f64,
    samples: Vec<Vec<C64>>,
}

impl InputStream {
    pub fn new(m: usize, bound: f64, samples: Vec<Vec<C64>>) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidArgument(format!("input bound must be positive, got {bound}")));
        }
        for (t, c) in samples.iter().enumerate() {
            if c.len() != m {
                return Err(mismatch("input sample length", m, c.len()));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
            let norm = vec_norm(c);
            if norm > bound * (1.0 + BOUND_SLACK) {
                return Err(Error::InvalidArgument(format!(
                    "sample {} has norm {norm} above the bound {bound}",
                    t + 1
                )));
            }
        }
        Ok(Self { m, bound, samples })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<C64>] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Vec<C64>> {
        self.samples
    }
}

/// States `x_1..x_L` and outputs `y_1..y_L` of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<C64>>,
    pub outputs: Vec<Vec<C64>>,
}

/// The triple `(W, V, h)` driven by `x_t = W x_{t-1} + V c_t`, `y_t = h(x_t)`.
#[derive(Debug, Clone)]
pub struct LinearReservoirSystem {
    w: Coupling,
    v: ComplexMatrix,
    readout: Readout,
    lambda: f64,
}

impl LinearReservoirSystem {
    pub fn new(w: ComplexMatrix, v: ComplexMatrix, readout: Readout) -> Result<Self> {
        if !w.is_square() {
            return Err(mismatch("coupling shape", "square", format!("{}x{}", w.rows(), w.cols())));
        }
        Self::with_coupling(Coupling::from_dense(w), v, readout)
    }

    pub fn with_coupling(w: Coupling, v: ComplexMatrix, readout: Readout) -> Result<Self> {
        let n = w.dim();
        if v.rows() != n {
            return Err(mismatch("input matrix rows", n, v.rows()));
        }
        if readout.input_dim() != n {
            return Err(mismatch("readout input dimension", n, readout.input_dim()));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite);
        }
        if let Coupling::PermutationBlocks { scale, .. } = &w {
            if !scale.is_finite() {
                return Err(Error::NonFinite);
            }
        }
        let lambda = w.operator_norm()?;
        if !(lambda < 1.0) {
            return Err(Error::NotContractive { lambda });
        }
        Ok(Self { w, v, readout, lambda })
    }

    pub fn n(&self) -> usize {
        self.w.dim()
    }

    pub fn m(&self) -> usize {
        self.v.cols()
    }

    pub fn d(&self) -> usize {
        self.readout.output_dim()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coupling(&self) -> &Coupling {
        &self.w
    }

    pub fn w_dense(&self) -> ComplexMatrix {
        self.w.to_dense()
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn readout(&self) -> &Readout {
        &self.readout
    }

    pub fn input_norm(&self) -> Result<f64> {
        operator_norm(&self.v)
    }

    /// `M‖V‖/(1-λ)`: radius of the ball containing every reachable state.
    pub fn state_radius(&self, bound: f64) -> Result<f64> {
        Ok(bound * self.input_norm()? / (1.0 - self.lambda))
    }

    fn check_stream(&self, u: &InputStream) -> Result<()> {
        if u.m() != self.m() {
            return Err(mismatch("input stream dimension", self.m(), u.m()));
        }
        Ok(())
    }

    /// Feeds the stream through the recursion from `x_0 = 0`, calling
    /// `visit(t, x_t, y_t)` for `t = 1..L` without storing the trajectory.
    pub fn simulate_with<F>(&self, u: &InputStream, mut visit: F) -> Result<Vec<C64>>
    where
        F: FnMut(usize, &[C64], &[C64]),
    {
        self.check_stream(u)?;
        let mut x = vec![ZERO; self.n()];
        for (t, c) in u.samples().iter().enumerate() {
            x = self.w.apply(&x);
            for (xi, vi) in x.iter_mut().zip(self.v.matvec(c)) {
                *xi += vi;
            }
            let y = self.readout.evaluate(&x);
            visit(t + 1, &x, &y);
        }
        Ok(x)
    }

    pub fn run(&self, u: &InputStream) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(u.len());
        let mut outputs = Vec::with_capacity(u.len());
        self.simulate_with(u, |_, x, y| {
            states.push(x.to_vec());
            outputs.push(y.to_vec());
        })?;
        Ok(Trajectory { states, outputs })
    }

    pub fn outputs(&self, u: &InputStream) -> Result<Vec<Vec<C64>>> {
        let mut outputs = Vec::with_capacity(u.len());
        self.simulate_with(u, |_, _, y| outputs.push(y.to_vec()))?;
        Ok(outputs)
    }

    /// `Σ_{j=0}^{L-1} W^j V c_{L-j}` from explicit matrix powers.
    pub fn closed_form_state(&self, u: &InputStream) -> Result<Vec<C64>> {
        self.check_stream(u)?;
        let w = self.w.to_dense();
        let mut power = ComplexMatrix::identity(self.n());
        let mut acc = vec![ZERO; self.n()];
        for c in u.samples().iter().rev() {
            let term = (&power * &self.v).matvec(c);
            for (a, t) in acc.iter_mut().zip(term) {
                *a += t;
            }
            power = &w * &power;
        }
        Ok(acc)
    }

    /// The system `(S⁻¹WS, S⁻¹V, h∘S)`, equivalent to this one.
    pub fn similarity_transform(&self, s: &ComplexMatrix) -> Result<Self> {
        if s.shape() != (self.n(), self.n()) {
            return Err(mismatch("similarity shape", self.n(), format!("{}x{}", s.rows(), s.cols())));
        }
        let s_inv = inverse(s)?;
        let w = &(&s_inv * &self.w.to_dense()) * s;
        let v = &s_inv * &self.v;
        Self::new(w, v, self.readout.compose(s)?)
    }

    pub fn with_readout(&self, readout: Readout) -> Result<Self> {
        Self::with_coupling(self.w.clone(), self.v.clone(), readout)
    }
}

/// `2·M·‖V‖·λ^{L+1}/(1-λ)`: bound on the state error from dropping inputs
/// older than `L` steps.
pub fn truncation_tail_bound(lambda: f64, norm_v: f64, bound: f64, horizon: u64) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("λ must lie in [0, 1), got {lambda}")));
    }
    if norm_v < 0.0 || bound < 0.0 {
        return Err(Error::InvalidArgument("norms and bounds must be nonnegative".into()));
    }
    let exp = horizon.saturating_add(1).min(i32::MAX as u64) as i32;
    Ok(2.0 * bound * norm_v * lambda.powi(exp) / (1.0 - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;
    use crate::random::{complex_gaussian, random_complex_matrix, random_contraction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(w: f64) -> LinearReservoirSystem {
        LinearReservoirSystem::new(
            ComplexMatrix::from_real_rows(&[vec![w]]).unwrap(),
            ComplexMatrix::identity(1),
            Readout::identity(1),
        )
        .unwrap()
    }

    fn random_stream(rng: &mut ChaCha8Rng, m: usize, len: usize) -> InputStream {
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
    fn impulse_response_is_geometric() {
        let r = scalar(0.5);
        let mut s = vec![vec![ZERO]; 4];
        s[0][0] = ONE;
        let tr = r.run(&InputStream::new(1, 1.0, s).unwrap()).unwrap();
        let xs: Vec<f64> = tr.states.iter().map(|x| x[0].re).collect();
        assert_eq!(xs, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let r = scalar(0.9);
        let tr = r.run(&InputStream::new(1, 1.0, vec![vec![ZERO]; 10]).unwrap()).unwrap();
        assert!(tr.outputs.iter().all(|y| y[0] == ZERO));
        let cf = r.closed_form_state(&InputStream::new(1, 1.0, vec![vec![ZERO]; 10]).unwrap());
        assert_eq!(cf.unwrap(), vec![ZERO]);
    }

    #[test]
    fn closed_form_matches_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, m, len) in [(3, 2, 40), (2, 1, 30)] {
            let w = random_contraction(&mut rng, n, 0.9);
            let v = random_complex_matrix(&mut rng, n, m);
            let r = LinearReservoirSystem::new(w, v, Readout::identity(n)).unwrap();
            let u = random_stream(&mut rng, m, len);
            let tr = r.run(&u).unwrap();
            let cf = r.closed_form_state(&u).unwrap();
            assert!(vec_norm(&vec_sub(tr.states.last().unwrap(), &cf)) < 1e-12);
        }
    }

    #[test]
    fn most_recent_impulse_gives_v_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_contraction(&mut rng, 3, 0.5);
        let v = random_complex_matrix(&mut rng, 3, 2);
        let r = LinearReservoirSystem::new(w, v.clone(), Readout::identity(3)).unwrap();
        let c = vec![C64::new(0.6, 0.0), C64::new(0.0, -0.8)];
        let mut s = vec![vec![ZERO; 2]; 5];
        s[4] = c.clone();
        let cf = r.closed_form_state(&InputStream::new(2, 1.0, s).unwrap()).unwrap();
        assert!(vec_norm(&vec_sub(&cf, &v.matvec(&c))) < 1e-15);
    }

    use crate::linalg::vec_sub;

    #[test]
    fn tail_bound_values() {
        let b = truncation_tail_bound(0.5, 1.0, 1.0, 19).unwrap();
        assert!((b - 4.0 * 0.5f64.powi(20)).abs() < 1e-20);
        assert!((b - 3.8147e-6).abs() < 1e-9);
        assert_eq!(truncation_tail_bound(0.5, 1.0, 0.0, 3).unwrap(), 0.0);
        assert!(truncation_tail_bound(1.0, 1.0, 1.0, 3).is_err());
        assert!(truncation_tail_bound(0.7, 2.0, 3.0, 11).unwrap() > truncation_tail_bound(0.7, 2.0, 3.0, 12).unwrap());
    }

    #[test]
    fn rejects_non_contractive_and_mismatched() {
        let id = ComplexMatrix::identity(2);
        assert!(matches!(
            LinearReservoirSystem::new(id.clone(), id.clone(), Readout::identity(2)),
            Err(Error::NotContractive { .. })
        ));
        let w = id.scale(0.5);
        assert!(LinearReservoirSystem::new(w.clone(), ComplexMatrix::identity(3), Readout::identity(2)).is_err());
        assert!(LinearReservoirSystem::new(w.clone(), id.clone(), Readout::identity(3)).is_err());
        let r = LinearReservoirSystem::new(w, id, Readout::identity(2)).unwrap();
        let u = InputStream::new(1, 1.0, vec![vec![ONE]]).unwrap();
        assert!(r.run(&u).is_err());
    }

    #[test]
    fn stream_bound_is_enforced() {
        assert!(InputStream::new(1, 1.0, vec![vec![C64::new(1.5, 0.0)]]).is_err());
        assert!(InputStream::new(1, 0.0, vec![]).is_err());
        assert!(InputStream::new(2, 1.0, vec![vec![ONE]]).is_err());
    }

    #[test]
    fn detects_scaled_permutations() {
        let p = PermutationSpec::from_one_based(&[2, 3, 1]).unwrap();
        let w = p.matrix().scale(0.5);
        let c = Coupling::from_dense(w.clone());
        assert_eq!(c.as_scaled_full_cycle().map(|(s, q)| (s, q.clone())), Some((0.5, p)));
        assert_eq!(c.to_dense(), w);
        let mut w2 = w;
        w2[(0, 0)] = C64::new(1e-3, 0.0);
        assert!(matches!(Coupling::from_dense(w2), Coupling::Dense(_)));
    }

    #[test]
    fn structured_and_dense_agree() {
        let blocks = vec![PermutationSpec::shift(3), PermutationSpec::from_one_based(&[2, 1]).unwrap()];
        let c = Coupling::PermutationBlocks { scale: 0.7, blocks };
        let x: Vec<C64> = (0..5).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let y1 = c.apply(&x);
        let y2 = c.to_dense().matvec(&x);
        assert!(vec_norm(&vec_sub(&y1, &y2)) < 1e-15);
        assert!((c.operator_norm().unwrap() - 0.7).abs() < 1e-15);
        assert!(c.as_scaled_full_cycle().is_none());
        let (s, merged) = c.as_scaled_permutation().unwrap();
        assert_eq!(s, 0.7);
        assert_eq!(merged.image(), &[1, 2, 0, 4, 3]);
    }

    #[test]
    fn similarity_preserves_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_contraction(&mut rng, 3, 0.3);
        let v = random_complex_matrix(&mut rng, 3, 2);
        let h = Readout::linear(random_complex_matrix(&mut rng, 2, 3));
        let r = LinearReservoirSystem::new(w, v, h).unwrap();
        let s = &ComplexMatrix::identity(3) + &random_complex_matrix(&mut rng, 3, 3).scale(0.1);
        let r2 = r.similarity_transform(&s).unwrap();
        let u = random_stream(&mut rng, 2, 50);
        let y1 = r.outputs(&u).unwrap();
        let y2 = r2.outputs(&u).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!(vec_norm(&vec_sub(a, b)) < 1e-9);
        }
    }
}
