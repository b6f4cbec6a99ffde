//! Deterministic, metered source of unbiased random bits.
//!
//! Everything random in this crate is drawn from a [`BitSource`], and every
//! draw is counted, so a run can state exactly how many random bits it spent.
//! The generator is a counter-mode pseudorandom permutation over 64-bit
//! blocks keyed by `(seed, stream_id)`: stateless random access, cheap stream
//! splitting, and the same bit stream on every platform.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RandBitsError {
    #[error("n must be a power of two, got {0}")]
    NotPowerOfTwo(u64),
}

/// Finalizer of SplitMix64; a bijection on `u64` with full avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_TAG: u64 = 0xC2B2_AE3D_27D4_EB4F;

/// A consumable stream of bits with exact accounting.
///
/// The trait exists so that constructions (sign families, row samplers) can
/// be driven either by a [`BitSource`] or by an explicit replayed bit string
/// ([`ReplayBits`]), e.g. when exhaustively enumerating a seed space.
pub trait BitStream {
    /// Draws one bit.
    fn draw_bit(&mut self) -> bool;

    /// Total bits handed out so far.
    fn bits_consumed(&self) -> u64;

    /// Draws `nbits` (at most 64) as an integer, most-significant-bit first.
    fn draw_word(&mut self, nbits: u32) -> u64 {
        assert!(nbits <= 64);
        let mut out = 0u64;
        for _ in 0..nbits {
            out = (out << 1) | self.draw_bit() as u64;
        }
        out
    }

    /// Draws `count` bits in stream order.
    fn draw_bits(&mut self, count: usize) -> Vec<bool> {
        (0..count).map(|_| self.draw_bit()).collect()
    }

    /// Draws a uniform index in `[0, n)` for a power-of-two `n`, consuming
    /// exactly `log2 n` bits (`n = 1` consumes none).
    fn draw_index_pow2(&mut self, n: u64) -> Result<u64, RandBitsError> {
        if !n.is_power_of_two() {
            return Err(RandBitsError::NotPowerOfTwo(n));
        }
        Ok(self.draw_word(n.trailing_zeros()))
    }
}

/// Seedable counter-mode bit generator with exact consumption accounting.
///
/// Identical `(seed, stream_id)` pairs produce byte-identical bit streams;
/// distinct `stream_id`s produce unrelated streams, so parallel work splits
/// the source by stream id rather than sharing it.
#[derive(Debug, Clone)]
pub struct BitSource {
    seed: u64,
    stream_id: u64,
    k0: u64,
    k1: u64,
    counter: u64,
    /// Unconsumed bits of the current block, left-aligned.
    buf: u64,
    buf_bits: u32,
    consumed: u64,
}

impl BitSource {
    /// Source on the default stream (stream id 0).
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let k0 = mix64(seed.wrapping_add(GAMMA));
        let k1 = mix64(k0 ^ mix64(stream_id.wrapping_add(GAMMA)));
        BitSource {
            seed,
            stream_id,
            k0,
            k1,
            counter: 0,
            buf: 0,
            buf_bits: 0,
            consumed: 0,
        }
    }

    /// Derived source for parallel or component work: same seed, distinct
    /// stream. Children of the same parent never collide with each other.
    pub fn child(&self, index: u64) -> BitSource {
        let id = mix64(mix64(self.stream_id ^ STREAM_TAG).wrapping_add(index));
        BitSource::with_stream(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Block `ctr` of the stream; a bijection of `ctr` for fixed keys.
    #[inline]
    fn block(&self, ctr: u64) -> u64 {
        mix64(mix64(ctr ^ self.k0).wrapping_add(self.k1))
    }
}

impl BitStream for BitSource {
    #[inline]
    fn draw_bit(&mut self) -> bool {
        if self.buf_bits == 0 {
            self.buf = self.block(self.counter);
            self.counter += 1;
            self.buf_bits = 64;
        }
        let bit = self.buf >> 63;
        self.buf <<= 1;
        self.buf_bits -= 1;
        self.consumed += 1;
        bit == 1
    }

    #[inline]
    fn draw_word(&mut self, nbits: u32) -> u64 {
        assert!(nbits <= 64);
        let mut out = 0u64;
        let mut need = nbits;
        while need > 0 {
            if self.buf_bits == 0 {
                self.buf = self.block(self.counter);
                self.counter += 1;
                self.buf_bits = 64;
            }
            let take = need.min(self.buf_bits);
            if take == 64 {
                out = self.buf;
                self.buf = 0;
            } else {
                out = (out << take) | (self.buf >> (64 - take));
                self.buf <<= take;
            }
            self.buf_bits -= take;
            need -= take;
        }
        self.consumed += nbits as u64;
        out
    }

    fn bits_consumed(&self) -> u64 {
        self.consumed
    }
}

/// Replays a fixed bit string; drawing past the end panics.
///
/// Used to hand-trace constructions against worked examples and to enumerate
/// an entire seed space bit-exactly through the production code path.
#[derive(Debug, Clone)]
pub struct ReplayBits {
    bits: Vec<bool>,
    pos: usize,
}

impl ReplayBits {
    pub fn new(bits: Vec<bool>) -> Self {
        ReplayBits { bits, pos: 0 }
    }

    /// The low `width` bits of `value`, replayed most-significant-bit first.
    pub fn from_word(value: u64, width: u32) -> Self {
        assert!(width <= 64);
        let bits = (0..width)
            .rev()
            .map(|i| (value >> i) & 1 == 1)
            .collect();
        ReplayBits { bits, pos: 0 }
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_str_bits(s: &str) -> Self {
        ReplayBits::new(s.chars().map(|c| c == '1').collect())
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }
}

impl BitStream for ReplayBits {
    fn draw_bit(&mut self) -> bool {
        let bit = self.bits[self.pos];
        self.pos += 1;
        bit
    }

    fn bits_consumed(&self) -> u64 {
        self.pos as u64
    }
}

/// Bits spent per pipeline component, the claim-checking currency of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BitReport {
    /// Sign diagonal seed bits.
    pub signs: u64,
    /// Sparse row sampling: index draws plus per-entry sign bits.
    pub rows: u64,
    /// Dense fallback matrices.
    pub fallback: u64,
}

impl BitReport {
    pub fn total(&self) -> u64 {
        self.signs + self.rows + self.fallback
    }
}

impl serde::Serialize for BitReport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("BitReport", 4)?;
        s.serialize_field("signs", &self.signs)?;
        s.serialize_field("rows", &self.rows)?;
        s.serialize_field("fallback", &self.fallback)?;
        s.serialize_field("total", &self.total())?;
        s.end()
    }
}
