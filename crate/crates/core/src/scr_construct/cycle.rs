use num_integer::Integer;

use crate::error::{Error, Result};
use crate::linalg::{is_full_cycle, PermutationSpec};

/// The `nk × nk` permutation with `P` on blocks `(i, i-1)` for `1 ≤ i < k`
/// and on the top-right block `(0, k-1)`. It is a full cycle when `P` is one
/// and `gcd(n, k) = 1`.
pub fn block_cycle(p: &PermutationSpec, k: usize) -> Result<PermutationSpec> {
    if !is_full_cycle(p) {
        return Err(Error::Precondition(format!("{p:?} is not a full-cycle permutation")));
    }
    if k == 0 || p.size().gcd(&k) != 1 {
        return Err(Error::Precondition(format!(
            "block count {k} is not coprime to the cycle length {}",
            p.size()
        )));
    }
    Ok(block_cycle_unchecked(p, k))
}

/// [`block_cycle`] without its preconditions, for exhibiting the failure
/// when `gcd(n, k) ≠ 1`.
#[doc(hidden)]
pub fn block_cycle_unchecked(p: &PermutationSpec, k: usize) -> PermutationSpec {
    let n = p.size();
    let image = (0..n * k)
        .map(|col| {
            let (block, pos) = (col / n, col % n);
            ((block + 1) % k) * n + p.apply(pos)
        })
        .collect();
    PermutationSpec::new(image).expect("block layout of a permutation is a permutation")
}
