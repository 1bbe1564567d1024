use std::fmt;

use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, ONE, ZERO};
use crate::error::{Error, Result};

/// A permutation σ of `{0, …, n-1}` with matrix convention `P e_i = e_σ(i)`,
/// i.e. column `i` of the matrix holds its single one in row `σ(i)`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PermutationSpec {
    image: Vec<usize>,
}

impl PermutationSpec {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &j in &image {
            if j >= n {
                return Err(Error::InvalidPermutation(format!(
                    "image {j} out of range for size {n}"
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidPermutation(format!("image {j} repeated")));
            }
        }
        Ok(Self { image })
    }

    /// Builds σ from one-based images `σ(1), …, σ(n)`.
    pub fn from_one_based(image: &[usize]) -> Result<Self> {
        if image.contains(&0) {
            return Err(Error::InvalidPermutation("one-based image contains 0".into()));
        }
        Self::new(image.iter().map(|&j| j - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self { image: (0..n).collect() }
    }

    /// The circular shift `e_j -> e_{j+1 mod n}`.
    pub fn shift(n: usize) -> Self {
        Self {
            image: (0..n).map(|j| (j + 1) % n).collect(),
        }
    }

    /// Builds from a list of cycles in one-based notation, e.g. `[[1,4,5,2,3,6]]`.
    pub fn from_cycles(n: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut image: Vec<usize> = (0..n).collect();
        let mut touched = vec![false; n];
        for cycle in cycles {
            for (pos, &a) in cycle.iter().enumerate() {
                let b = cycle[(pos + 1) % cycle.len()];
                if a == 0 || b == 0 || a > n || b > n {
                    return Err(Error::InvalidPermutation(format!(
                        "cycle entry out of range 1..={n}"
                    )));
                }
                if std::mem::replace(&mut touched[a - 1], true) {
                    return Err(Error::InvalidPermutation(format!("{a} appears twice")));
                }
                image[a - 1] = b - 1;
            }
        }
        Self::new(image)
    }

    pub fn size(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.size()];
        for (i, &j) in self.image.iter().enumerate() {
            inv[j] = i;
        }
        Self { image: inv }
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.size(), other.size());
        Self {
            image: other.image.iter().map(|&j| self.image[j]).collect(),
        }
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut acc = Self::identity(self.size());
        for _ in 0..k {
            acc = self.compose(&acc);
        }
        acc
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Length of the orbit of index 0.
    pub fn orbit_len_of_first(&self) -> usize {
        if self.image.is_empty() {
            return 0;
        }
        let mut len = 1;
        let mut j = self.image[0];
        while j != 0 {
            j = self.image[j];
            len += 1;
        }
        len
    }

    /// Disjoint cycles in one-based notation, each starting at its smallest element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.size()];
        let mut out = Vec::new();
        for start in 0..self.size() {
            if seen[start] {
                continue;
            }
            let mut cycle = vec![start + 1];
            seen[start] = true;
            let mut j = self.image[start];
            while j != start {
                seen[j] = true;
                cycle.push(j + 1);
                j = self.image[j];
            }
            out.push(cycle);
        }
        out
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let n = self.size();
        let mut m = ComplexMatrix::zeros(n, n);
        for (i, &j) in self.image.iter().enumerate() {
            m[(j, i)] = ONE;
        }
        m
    }

    /// Reads a permutation back from a matrix whose entries are exactly 0 or 1.
    pub fn from_matrix(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidPermutation("matrix is not square".into()));
        }
        let n = m.rows();
        let mut image = Vec::with_capacity(n);
        for i in 0..n {
            let mut hit = None;
            for r in 0..n {
                let z = m[(r, i)];
                if z == ONE {
                    if hit.replace(r).is_some() {
                        return Err(Error::InvalidPermutation(format!(
                            "column {i} has more than one unit entry"
                        )));
                    }
                } else if z != ZERO {
                    return Err(Error::InvalidPermutation(format!(
                        "entry ({r},{i}) is neither 0 nor 1"
                    )));
                }
            }
            image.push(hit.ok_or_else(|| {
                Error::InvalidPermutation(format!("column {i} has no unit entry"))
            })?);
        }
        Self::new(image)
    }
}

impl TryFrom<Vec<usize>> for PermutationSpec {
    type Error = Error;
    fn try_from(image: Vec<usize>) -> Result<Self> {
        Self::new(image)
    }
}

impl From<PermutationSpec> for Vec<usize> {
    fn from(p: PermutationSpec) -> Self {
        p.image
    }
}

impl fmt::Debug for PermutationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.cycles() {
            let parts: Vec<String> = c.iter().map(ToString::to_string).collect();
            write!(f, "({})", parts.join(","))?;
        }
        Ok(())
    }
}

/// True iff σ is a single cycle through all `n` indices.
pub fn is_full_cycle(p: &PermutationSpec) -> bool {
    p.size() > 0 && p.orbit_len_of_first() == p.size()
}
