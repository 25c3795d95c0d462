//! Seeded physical-layer error injection: independent bit flips at a
//! configured BER, plus optional burst errors (a first-bit-error that
//! propagates as a geometric-length run).
//!
//! Flips are drawn by geometric gap sampling: per-bit Bernoulli trials and
//! gap sampling produce identical marginal distributions, but the latter
//! costs O(expected flips) instead of O(flit bits), which is what makes
//! 10^7-flit runs at BER 1e-6 cheap. Draw order is fixed (BER pass, then
//! burst pass), so a given (config, RNG state) always yields the same mask.

use rand::Rng;

use crate::flit_codec::WIRE_BYTES;

/// Bits per wire flit.
pub const FLIT_BITS: usize = WIRE_BYTES * 8;

/// Channel error parameters. Probabilities are per bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorConfig {
    pub ber: f64,
    pub burst_enabled: bool,
    /// Probability that a bit seeds a burst (the "first bit error" rate).
    pub burst_start_prob: f64,
    /// Expected burst length in bits; geometric, so memoryless. Must be >= 1.
    pub burst_mean_len: f64,
}

impl ErrorConfig {
    pub const QUIET: ErrorConfig =
        ErrorConfig { ber: 0.0, burst_enabled: false, burst_start_prob: 0.0, burst_mean_len: 1.0 };

    /// True when no draw can ever flip a bit; lets callers skip the RNG.
    #[must_use]
    pub fn is_quiet(&self) -> bool {
        self.ber <= 0.0 && (!self.burst_enabled || self.burst_start_prob <= 0.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.ber) {
            return Err(format!("ber must be in [0,1], got {}", self.ber));
        }
        if !(0.0..=1.0).contains(&self.burst_start_prob) {
            return Err(format!("burst_start_prob must be in [0,1], got {}", self.burst_start_prob));
        }
        if self.burst_mean_len < 1.0 {
            return Err(format!("burst_mean_len must be >= 1, got {}", self.burst_mean_len));
        }
        Ok(())
    }
}

/// Ground-truth record of every flipped bit position in one 256-byte flit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct BitMask2048 {
    words: [u64; FLIT_BITS / 64],
}

impl BitMask2048 {
    pub const EMPTY: BitMask2048 = BitMask2048 { words: [0u64; FLIT_BITS / 64] };

    #[inline]
    pub fn set(&mut self, bit: usize) {
        debug_assert!(bit < FLIT_BITS);
        self.words[bit >> 6] |= 1u64 << (bit & 63);
    }

    #[must_use]
    pub fn get(&self, bit: usize) -> bool {
        self.words[bit >> 6] & (1u64 << (bit & 63)) != 0
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[must_use]
    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// XORs the mask into the wire image. Bit i of the flit is bit (i mod 8)
    /// of byte ⌊i/8⌋, which lines up with little-endian word serialization.
    pub fn apply(&self, wire: &mut [u8; WIRE_BYTES]) {
        for (w, word) in self.words.iter().enumerate() {
            if *word != 0 {
                for (k, b) in word.to_le_bytes().iter().enumerate() {
                    wire[w * 8 + k] ^= b;
                }
            }
        }
    }

    #[must_use]
    pub fn ones(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (w, &word) in self.words.iter().enumerate() {
            let mut rest = word;
            while rest != 0 {
                out.push(w * 64 + rest.trailing_zeros() as usize);
                rest &= rest - 1;
            }
        }
        out
    }
}

/// Next gap of a geometric arrival process with per-trial probability `p`:
/// number of clear bits before the next set bit. `log1m_p` = ln(1-p).
#[inline]
fn geometric_gap<R: Rng>(rng: &mut R, log1m_p: f64) -> usize {
    // 1-U is in (0,1], so the log is finite and <= 0
    let u: f64 = rng.gen();
    let gap = ((1.0 - u).ln() / log1m_p).floor();
    if gap >= FLIT_BITS as f64 {
        FLIT_BITS // saturate: beyond any flit
    } else {
        gap as usize
    }
}

/// Draws the error mask for one flit without touching the flit bytes.
/// Each bit flips independently with probability `ber`; if bursts are on,
/// each bit additionally seeds a run with probability `burst_start_prob`,
/// flipping `geometric(mean = burst_mean_len)` consecutive bits (clipped at
/// the flit end). Overlapping processes saturate: a bit hit twice stays
/// flipped.
#[must_use]
pub fn draw_error_mask<R: Rng>(cfg: &ErrorConfig, rng: &mut R) -> BitMask2048 {
    let mut mask = BitMask2048::EMPTY;
    if cfg.ber > 0.0 {
        if cfg.ber >= 1.0 {
            for bit in 0..FLIT_BITS {
                mask.set(bit);
            }
        } else {
            let log1m = (-cfg.ber).ln_1p();
            let mut pos = geometric_gap(rng, log1m);
            while pos < FLIT_BITS {
                mask.set(pos);
                pos += 1 + geometric_gap(rng, log1m);
            }
        }
    }
    if cfg.burst_enabled && cfg.burst_start_prob > 0.0 {
        let start_log1m = if cfg.burst_start_prob >= 1.0 { f64::NEG_INFINITY } else { (-cfg.burst_start_prob).ln_1p() };
        let len_p = 1.0 / cfg.burst_mean_len;
        let len_log1m = if len_p >= 1.0 { f64::NEG_INFINITY } else { (-len_p).ln_1p() };
        let mut pos = if cfg.burst_start_prob >= 1.0 { 0 } else { geometric_gap(rng, start_log1m) };
        while pos < FLIT_BITS {
            let len = if len_log1m == f64::NEG_INFINITY { 1 } else { 1 + geometric_gap(rng, len_log1m) };
            for bit in pos..(pos + len).min(FLIT_BITS) {
                mask.set(bit);
            }
            pos += 1 + if start_log1m == f64::NEG_INFINITY { 0 } else { geometric_gap(rng, start_log1m) };
        }
    }
    mask
}

/// Applies a freshly drawn mask to the wire and returns it as ground truth.
#[must_use]
pub fn corrupt_flit<R: Rng>(wire: &mut [u8; WIRE_BYTES], cfg: &ErrorConfig, rng: &mut R) -> BitMask2048 {
    let mask = draw_error_mask(cfg, rng);
    mask.apply(wire);
    mask
}
