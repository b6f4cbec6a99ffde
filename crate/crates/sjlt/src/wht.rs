//! Normalized fast Walsh-Hadamard transform.
//!
//! `H_1 = (1)`, `H_n = 2^(-1/2) [[H_{n/2}, H_{n/2}], [H_{n/2}, -H_{n/2}]]`.
//! The matrix is symmetric orthogonal with all entries `+-1/sqrt(n)`, so the
//! transform is an involution and an isometry. Applied in place by an
//! iterative butterfly schedule in `n log2 n` additions; the `1/sqrt(2)`
//! scaling is fused into each stage to keep the dynamic range flat.
//!
//! Inputs must have power-of-two length; callers with other lengths zero-pad
//! first (see `transform::pad_pow2`). Entries are expected finite; the
//! transform neither checks for nor produces NaN/Inf on finite input.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WhtError {
    #[error("length must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("batch mixes lengths {0} and {1}")]
    MixedLengths(usize, usize),
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[inline]
fn wht_impl<const COUNT: bool>(x: &mut [f64]) -> u64 {
    let n = x.len();
    let mut additions = 0u64;
    let mut h = 1;
    while h < n {
        let mut i = 0;
        while i < n {
            for j in i..i + h {
                let a = x[j];
                let b = x[j + h];
                x[j] = (a + b) * FRAC_1_SQRT_2;
                x[j + h] = (a - b) * FRAC_1_SQRT_2;
            }
            i += 2 * h;
        }
        if COUNT {
            additions += n as u64;
        }
        h *= 2;
    }
    additions
}

/// In-place normalized Walsh-Hadamard transform.
pub fn wht_in_place(x: &mut [f64]) -> Result<(), WhtError> {
    if !x.len().is_power_of_two() {
        return Err(WhtError::NotPowerOfTwo(x.len()));
    }
    debug_assert!(x.iter().all(|v| v.is_finite()));
    wht_impl::<false>(x);
    Ok(())
}

/// As [`wht_in_place`], returning the number of butterfly additions
/// performed (exactly `n * log2 n`).
pub fn wht_in_place_counted(x: &mut [f64]) -> Result<u64, WhtError> {
    if !x.len().is_power_of_two() {
        return Err(WhtError::NotPowerOfTwo(x.len()));
    }
    Ok(wht_impl::<true>(x))
}

/// Copying wrapper.
pub fn wht_apply(x: &[f64]) -> Result<Vec<f64>, WhtError> {
    let mut out = x.to_vec();
    wht_in_place(&mut out)?;
    Ok(out)
}

/// Elementwise transform of a batch; all vectors must share one length.
pub fn wht_apply_batch(xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, WhtError> {
    if let Some(first) = xs.first() {
        for x in xs {
            if x.len() != first.len() {
                return Err(WhtError::MixedLengths(first.len(), x.len()));
            }
        }
    }
    xs.iter().map(|x| wht_apply(x)).collect()
}
