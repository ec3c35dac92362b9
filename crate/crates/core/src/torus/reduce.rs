//! Deterministic reductions.
//!
//! Sums are evaluated as a fixed binary tree over index ranges, so the result
//! does not depend on how many worker threads rayon happens to use.

use crate::scalar::Scalar;

const LEAF: usize = 512;
const PAR_CUTOFF: usize = 1 << 14;

/// Pairwise sum of `f(i)` for `i` in `0..n`.
pub fn pairwise_sum<S, F>(n: usize, f: F) -> S
where
    S: Scalar,
    F: Fn(usize) -> S + Sync,
{
    sum_range(0, n, &f)
}

fn sum_range<S, F>(lo: usize, hi: usize, f: &F) -> S
where
    S: Scalar,
    F: Fn(usize) -> S + Sync,
{
    let len = hi - lo;
    if len <= LEAF {
        let mut acc = S::zero();
        for i in lo..hi {
            acc = acc + f(i);
        }
        return acc;
    }
    let mid = lo + len / 2;
    if len >= PAR_CUTOFF {
        let (a, b) = rayon::join(|| sum_range(lo, mid, f), || sum_range(mid, hi, f));
        a + b
    } else {
        sum_range(lo, mid, f) + sum_range(mid, hi, f)
    }
}

/// Pairwise sum of a slice.
pub fn sum_slice<S: Scalar>(v: &[S]) -> S {
    pairwise_sum(v.len(), |i| v[i])
}
