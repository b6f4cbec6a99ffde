//! Uniform k-subsets of `{0, ..., n-1}` by rejection sampling.
//!
//! Each row of the sparse projection matrix activates a uniformly random
//! k-subset of columns, sampled by the loop: draw an index with `log2 n`
//! bits, keep it if new, repeat until k are held. The loop is deliberately
//! kept verbatim rather than replaced with Fisher-Yates: the number of
//! iterations `T` and the bit count `T * log2 n` are quantities under test.
//! `T` is a sum of k independent geometric variables with success
//! probabilities `1, (n-1)/n, ..., (n-k+1)/n`.

use crate::randbits::BitStream;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("n must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("subset size k={k} outside 1..={n}")]
    BadSubsetSize { n: usize, k: usize },
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(u64),
}

/// One sampled k-subset with its sampling cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowPattern {
    pub n: usize,
    pub k: usize,
    /// Distinct column indices, ascending.
    pub indices: Vec<u32>,
    /// Rejection-loop iterations taken.
    pub iterations: u64,
    /// `iterations * log2 n` (sign bits are accounted elsewhere).
    pub bits_used: u64,
}

fn validate(n: usize, k: usize) -> Result<(), SampleError> {
    if !n.is_power_of_two() {
        return Err(SampleError::NotPowerOfTwo(n));
    }
    if k < 1 || k > n {
        return Err(SampleError::BadSubsetSize { n, k });
    }
    Ok(())
}

/// Samples a uniform k-subset of `{0, ..., n-1}`; n must be a power of two
/// so each index draw costs exactly `log2 n` bits.
pub fn sample_subset<S: BitStream>(
    n: usize,
    k: usize,
    src: &mut S,
) -> Result<RowPattern, SampleError> {
    validate(n, k)?;
    let log2n = n.trailing_zeros();
    let mut words = vec![0u64; n.div_ceil(64)];
    let mut held = 0usize;
    let mut iterations = 0u64;
    while held < k {
        let j = src.draw_word(log2n) as usize;
        iterations += 1;
        let (w, b) = (j / 64, j % 64);
        if words[w] & (1 << b) == 0 {
            words[w] |= 1 << b;
            held += 1;
        }
    }
    // Walk the bitset so indices come out ascending.
    let mut indices = Vec::with_capacity(k);
    for (w, &word) in words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros();
            indices.push((w * 64) as u32 + b);
            bits &= bits - 1;
        }
    }
    Ok(RowPattern {
        n,
        k,
        indices,
        iterations,
        bits_used: iterations * log2n as u64,
    })
}

/// Exact expectation of the iteration count:
/// `E T = sum_{j=0}^{k-1} n / (n - j)`.
pub fn expected_iterations_exact(n: usize, k: usize) -> Result<f64, SampleError> {
    validate(n, k)?;
    Ok((0..k).map(|j| n as f64 / (n - j) as f64).sum())
}

/// Exact variance of the iteration count: sum of geometric variances
/// `(1 - p_j) / p_j^2` with `p_j = (n - j)/n`.
pub fn iteration_variance_exact(n: usize, k: usize) -> Result<f64, SampleError> {
    validate(n, k)?;
    Ok((0..k)
        .map(|j| {
            let p = (n - j) as f64 / n as f64;
            (1.0 - p) / (p * p)
        })
        .sum())
}

/// Empirical mean and (unbiased) variance of the iteration count over
/// repeated subset draws.
pub fn iteration_stats<S: BitStream>(
    n: usize,
    k: usize,
    trials: u64,
    src: &mut S,
) -> Result<(f64, f64), SampleError> {
    validate(n, k)?;
    if trials < 2 {
        return Err(SampleError::TooFewTrials(trials));
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..trials {
        let t = sample_subset(n, k, src)?.iterations as f64;
        sum += t;
        sum_sq += t * t;
    }
    let mean = sum / trials as f64;
    let var = (sum_sq - trials as f64 * mean * mean) / (trials - 1) as f64;
    Ok((mean, var))
}
