//! Limited-independence sign families from small seeds.
//!
//! The diagonal of the preconditioner is a family of n signs that only needs
//! to be l-wise independent. Such a family exists on a seed space of
//! `(log2 n + 1) * l/2 + 1` uniform bits: index column j by the nonzero field
//! element `x_j = j + 1` in GF(2^m) with `m = log2 n + 1`, draw field elements
//! `a_1, ..., a_{l/2}` and one bit `b_0`, and set
//!
//! ```text
//! sign_j = (-1) ^ ( b_0 xor XOR_t <a_t, x_j^(2t-1)> )
//! ```
//!
//! where `<.,.>` is the GF(2) inner product of bit representations. Any l of
//! these signs are jointly uniform: an even-sized set of distinct nonzero
//! elements whose odd power sums through `x^(l-1)` all vanish would have to
//! be larger than l (the dual-BCH distance argument), and odd-sized sets are
//! handled by `b_0`. [`verify_kwise_exact`] checks the property exhaustively
//! on small instances. When `l > n` the construction falls back to n fully
//! independent sign bits.

use crate::randbits::BitStream;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KwiseError {
    #[error("delta must lie in (0, 1/2), got {0}")]
    DeltaOutOfRange(f64),
    #[error("n must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("independence order l must be even and >= 2, got {0}")]
    BadIndependenceOrder(u32),
    #[error("field degree {0} outside supported range 1..=32")]
    UnsupportedFieldDegree(u32),
    #[error("enumeration needs {0} seed bits, budget is 24")]
    EnumerationTooLarge(u32),
}

/// Low-weight irreducible polynomials over GF(2), one per degree 1..=32.
/// Entry `m-1` is the full mask including the leading `x^m` term.
const IRREDUCIBLE: [u64; 32] = [
    (1 << 1) | 0b11,                                  // m=1:  x + 1 (reduction x -> 1)
    (1 << 2) | (1 << 1) | 1,                          // m=2:  x^2 + x + 1
    (1 << 3) | (1 << 1) | 1,                          // m=3:  x^3 + x + 1
    (1 << 4) | (1 << 1) | 1,                          // m=4:  x^4 + x + 1
    (1 << 5) | (1 << 2) | 1,                          // m=5:  x^5 + x^2 + 1
    (1 << 6) | (1 << 1) | 1,                          // m=6:  x^6 + x + 1
    (1 << 7) | (1 << 1) | 1,                          // m=7:  x^7 + x + 1
    (1 << 8) | (1 << 4) | (1 << 3) | (1 << 1) | 1,    // m=8
    (1 << 9) | (1 << 1) | 1,                          // m=9
    (1 << 10) | (1 << 3) | 1,                         // m=10
    (1 << 11) | (1 << 2) | 1,                         // m=11
    (1 << 12) | (1 << 3) | 1,                         // m=12
    (1 << 13) | (1 << 4) | (1 << 3) | (1 << 1) | 1,   // m=13
    (1 << 14) | (1 << 5) | 1,                         // m=14
    (1 << 15) | (1 << 1) | 1,                         // m=15
    (1 << 16) | (1 << 5) | (1 << 3) | (1 << 1) | 1,   // m=16
    (1 << 17) | (1 << 3) | 1,                         // m=17
    (1 << 18) | (1 << 3) | 1,                         // m=18
    (1 << 19) | (1 << 5) | (1 << 2) | (1 << 1) | 1,   // m=19
    (1 << 20) | (1 << 3) | 1,                         // m=20
    (1 << 21) | (1 << 2) | 1,                         // m=21
    (1 << 22) | (1 << 1) | 1,                         // m=22
    (1 << 23) | (1 << 5) | 1,                         // m=23
    (1 << 24) | (1 << 4) | (1 << 3) | (1 << 1) | 1,   // m=24
    (1 << 25) | (1 << 3) | 1,                         // m=25
    (1 << 26) | (1 << 4) | (1 << 3) | (1 << 1) | 1,   // m=26
    (1 << 27) | (1 << 5) | (1 << 2) | (1 << 1) | 1,   // m=27
    (1 << 28) | (1 << 1) | 1,                         // m=28
    (1 << 29) | (1 << 2) | 1,                         // m=29
    (1 << 30) | (1 << 1) | 1,                         // m=30
    (1 << 31) | (1 << 3) | 1,                         // m=31
    (1 << 32) | (1 << 7) | (1 << 3) | (1 << 2) | 1,   // m=32
];

/// Arithmetic context for GF(2^m) with a fixed irreducible modulus.
/// Elements are `u64` values below `2^m` (polynomial bit representation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gf2m {
    m: u32,
    poly: u64,
}

impl Gf2m {
    pub fn new(m: u32) -> Result<Self, KwiseError> {
        if m == 0 || m > 32 {
            return Err(KwiseError::UnsupportedFieldDegree(m));
        }
        Ok(Gf2m { m, poly: IRREDUCIBLE[(m - 1) as usize] })
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    /// Full modulus mask, including the leading term.
    pub fn modulus(&self) -> u64 {
        self.poly
    }

    pub fn order(&self) -> u64 {
        1u64 << self.m
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        a ^ b
    }

    /// Carry-less multiply followed by reduction mod the fixed polynomial.
    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.order() && b < self.order());
        let mut prod: u128 = 0;
        let mut b = b;
        let mut shift = 0u32;
        while b != 0 {
            if b & 1 == 1 {
                prod ^= (a as u128) << shift;
            }
            b >>= 1;
            shift += 1;
        }
        // Reduce from degree at most 2m-2 down below m.
        let poly = self.poly as u128;
        let mut deg = 2 * self.m as i32 - 2;
        while deg >= self.m as i32 {
            if prod >> deg & 1 == 1 {
                prod ^= poly << (deg as u32 - self.m);
            }
            deg -= 1;
        }
        prod as u64
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a;
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse of a nonzero element, via a^(2^m - 2).
    pub fn inv(&self, a: u64) -> u64 {
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.order() - 2)
    }
}

/// GF(2) inner product of two bit representations.
#[inline]
fn parity_dot(a: u64, b: u64) -> bool {
    (a & b).count_ones() & 1 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// l-wise independent family from the small seed space.
    KWise,
    /// Fully independent signs (used when `l > n`).
    Full,
}

/// An n-long +-1 sequence with limited independence, built from a counted
/// number of seed bits. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignFamily {
    n: usize,
    l: u32,
    mode: SignMode,
    signs: Vec<i8>,
    seed_bits_used: u64,
}

impl SignFamily {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn independence(&self) -> u32 {
        self.l
    }

    pub fn mode(&self) -> SignMode {
        self.mode
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn seed_bits_used(&self) -> u64 {
        self.seed_bits_used
    }

    /// Number of seed bits the construction will consume for `(n, l)`.
    pub fn seed_bits_for(n: usize, l: u32) -> u64 {
        if (l as usize) > n {
            n as u64
        } else {
            let m = n.trailing_zeros() as u64 + 1;
            m * (l as u64) / 2 + 1
        }
    }
}

/// Independence order needed for failure probability `delta` on n columns:
/// `2 * ceil(ln(n / delta))`.
pub fn required_independence(n: usize, delta: f64) -> Result<u32, KwiseError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(KwiseError::DeltaOutOfRange(delta));
    }
    Ok(2 * (n as f64 / delta).ln().ceil() as u32)
}

/// Builds the l-wise independent sign family, drawing
/// `(log2 n + 1) * l/2 + 1` bits (or n bits in full mode when `l > n`).
pub fn build_sign_family<S: BitStream>(
    n: usize,
    l: u32,
    src: &mut S,
) -> Result<SignFamily, KwiseError> {
    if !n.is_power_of_two() {
        return Err(KwiseError::NotPowerOfTwo(n));
    }
    if l < 2 || !l.is_multiple_of(2) {
        return Err(KwiseError::BadIndependenceOrder(l));
    }
    let before = src.bits_consumed();
    if (l as usize) > n {
        let signs = (0..n)
            .map(|_| if src.draw_bit() { -1i8 } else { 1i8 })
            .collect();
        return Ok(SignFamily {
            n,
            l,
            mode: SignMode::Full,
            signs,
            seed_bits_used: src.bits_consumed() - before,
        });
    }

    let m = n.trailing_zeros() + 1;
    let field = Gf2m::new(m)?;
    let coeffs: Vec<u64> = (0..l / 2).map(|_| src.draw_word(m)).collect();
    let b0 = src.draw_bit();

    let mut signs = Vec::with_capacity(n);
    for j in 0..n {
        let x = (j + 1) as u64;
        let x_sq = field.mul(x, x);
        let mut odd_power = x; // x^1, then x^3, x^5, ...
        let mut acc = b0;
        for &a in &coeffs {
            acc ^= parity_dot(a, odd_power);
            odd_power = field.mul(odd_power, x_sq);
        }
        signs.push(if acc { -1 } else { 1 });
    }
    Ok(SignFamily {
        n,
        l,
        mode: SignMode::KWise,
        signs,
        seed_bits_used: src.bits_consumed() - before,
    })
}

/// Exhaustively checks exact `order`-wise independence of the `(n, l)`
/// construction over its full seed space: every pattern on every subset of
/// `order` coordinates must occur equally often.
///
/// `verify_kwise_exact(n, l)` is this with `order = l`, the guaranteed case;
/// larger orders may legitimately fail.
pub fn verify_independence_order(n: usize, l: u32, order: u32) -> Result<bool, KwiseError> {
    if !n.is_power_of_two() {
        return Err(KwiseError::NotPowerOfTwo(n));
    }
    if l < 2 || !l.is_multiple_of(2) {
        return Err(KwiseError::BadIndependenceOrder(l));
    }
    let seed_bits = SignFamily::seed_bits_for(n, l) as u32;
    if seed_bits > 24 {
        return Err(KwiseError::EnumerationTooLarge(seed_bits));
    }
    let order = order.min(n as u32) as usize;
    let seeds: u64 = 1 << seed_bits;

    // Sign matrix over the whole seed space, one bitmask per seed
    // (bit j set = sign_j negative). n <= 2^23 here, but enumeration
    // budgets keep n small in practice; cap the mask width at 64.
    assert!(n <= 64, "enumeration supports n <= 64");
    let mut masks = Vec::with_capacity(seeds as usize);
    for seed in 0..seeds {
        let mut replay = crate::randbits::ReplayBits::from_word(seed, seed_bits);
        let fam = build_sign_family(n, l, &mut replay)?;
        debug_assert_eq!(fam.seed_bits_used(), seed_bits as u64);
        let mut mask = 0u64;
        for (j, &s) in fam.signs().iter().enumerate() {
            if s < 0 {
                mask |= 1 << j;
            }
        }
        masks.push(mask);
    }

    let patterns = 1usize << order;
    if !seeds.is_multiple_of(patterns as u64) {
        return Ok(false);
    }
    let target = seeds / patterns as u64;

    // Odometer over all `order`-subsets of columns.
    let mut subset: Vec<usize> = (0..order).collect();
    let mut counts = vec![0u64; patterns];
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for &mask in &masks {
            let mut pattern = 0usize;
            for &col in &subset {
                pattern = (pattern << 1) | ((mask >> col) & 1) as usize;
            }
            counts[pattern] += 1;
        }
        if counts.iter().any(|&c| c != target) {
            return Ok(false);
        }

        // Advance the subset odometer.
        let mut i = order;
        loop {
            if i == 0 {
                return Ok(true);
            }
            i -= 1;
            if subset[i] != i + n - order {
                subset[i] += 1;
                for j in i + 1..order {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// True iff the `(n, l)` family is exactly l-wise independent over its full
/// seed space (exhaustive enumeration; seed spaces above 24 bits rejected).
pub fn verify_kwise_exact(n: usize, l: u32) -> Result<bool, KwiseError> {
    verify_independence_order(n, l, l)
}
