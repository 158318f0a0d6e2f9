use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Resamples used when exact enumeration is too large.
pub const DEFAULT_RESAMPLES: usize = 100_000;

/// Above this many non-zero differences the test samples sign flips.
pub const EXACT_LIMIT: usize = 20;

/// Per-question differences `a - b` of 0/1 correctness, zeros dropped.
/// Pairs with equal outcomes do not change under a sign flip.
pub fn nonzero_differences(a: &[bool], b: &[bool]) -> Vec<i64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| i64::from(x) - i64::from(y))
        .filter(|d| *d != 0)
        .collect()
}

/// Two-sided p over all 2^n sign assignments of `diffs`.
pub fn exact_p(diffs: &[i64]) -> f64 {
    let n = diffs.len();
    assert!(n < 63, "exact enumeration limited to fewer than 63 differences");
    if n == 0 {
        return 1.0;
    }
    let observed = diffs.iter().sum::<i64>().abs();
    let total = 1u64 << n;
    let mut hits = 0u64;
    for mask in 0..total {
        let s: i64 = diffs
            .iter()
            .enumerate()
            .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
            .sum();
        if s.abs() >= observed {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Two-sided p estimated from `resamples` random sign assignments.
pub fn sampled_p(diffs: &[i64], resamples: usize, seed: u64) -> f64 {
    if diffs.is_empty() || resamples == 0 {
        return 1.0;
    }
    let observed = diffs.iter().sum::<i64>().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let mut s = 0i64;
        for chunk in diffs.chunks(64) {
            let bits: u64 = rng.random();
            for (i, d) in chunk.iter().enumerate() {
                s += if bits >> i & 1 == 1 { -d } else { *d };
            }
        }
        if s.abs() >= observed {
            hits += 1;
        }
    }
    hits as f64 / resamples as f64
}

/// Paired sign-flip permutation test on per-question correctness.
/// Enumerates exactly when there are at most [`EXACT_LIMIT`] discordant
/// pairs, otherwise samples.
pub fn paired_permutation_p(a: &[bool], b: &[bool], resamples: usize, seed: u64) -> f64 {
    assert_eq!(a.len(), b.len(), "paired vectors must have equal length");
    let diffs = nonzero_differences(a, b);
    if diffs.len() <= EXACT_LIMIT {
        exact_p(&diffs)
    } else {
        sampled_p(&diffs, resamples, seed)
    }
}
