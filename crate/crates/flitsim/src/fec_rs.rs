//! Shortened Reed-Solomon single-symbol-correction codec over GF(2^8) with
//! 3-way interleaving across the 256-byte flit.
//!
//! The 250-byte core (header ‖ payload ‖ CRC) is split by `byte i →
//! sub-block (i mod 3), position ⌊i/3⌋`, giving data lengths (84, 83, 83),
//! and each sub-block gets 2 parity symbols: codewords of 86, 85, 85
//! symbols, shortened from the full 255-symbol RS code by 169/170/170
//! implicit leading zeros. Parity for sub-block j sits at wire bytes
//! 250+2j and 251+2j (high-degree symbol first).
//!
//! Two parity symbols give minimum distance 3: any single symbol error per
//! sub-block is corrected exactly, so any burst of <= 3 consecutive core
//! bytes (one symbol per sub-block) is always repaired. Errors beyond one
//! symbol produce a single-error hypothesis whose locator is uniform-ish
//! over the 255-symbol space; a locator landing in the shortened zero span
//! (or an inconsistent syndrome pair) is reported as detected-uncorrectable,
//! which is what makes multi-symbol bursts *mostly* detectable.
//!
//! Field: x^8+x^4+x^3+x^2+1 (0x11D), generator element α = 0x02, generator
//! polynomial g(x) = (x+1)(x+α) = x^2 + 3x + 2 (roots α^0, α^1).

use crate::flit_codec::{CORE_BYTES, WIRE_BYTES};

pub const NUM_SUBBLOCKS: usize = 3;
/// Data symbols per sub-block under the `i mod 3` split of 250 bytes.
pub const SUBBLOCK_DATA_LEN: [usize; NUM_SUBBLOCKS] = [84, 83, 83];
pub const PARITY_LEN: usize = 2;
/// Longest codeword (data + parity) across the three sub-blocks.
pub const MAX_CODEWORD: usize = 86;
/// Full (unshortened) RS code length over GF(2^8).
pub const RS_NATIVE_LEN: usize = 255;

pub const GF_FIELD_POLY: u16 = 0x11D;
pub const GF_ALPHA: u8 = 0x02;
/// g(x) = x^2 + GEN[0]·x + GEN[1].
pub const RS_GENERATOR: [u8; 2] = [0x03, 0x02];

// ---------------------------------------------------------------------------
// GF(2^8) arithmetic, log/antilog tables built at compile time.
// ---------------------------------------------------------------------------

const fn build_exp() -> [u8; 510] {
    let mut exp = [0u8; 510];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= GF_FIELD_POLY;
        }
        i += 1;
    }
    exp
}

const fn build_log() -> [u8; 256] {
    let exp = build_exp();
    let mut log = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        log[exp[i] as usize] = i as u8;
        i += 1;
    }
    log // log[0] stays 0 and must never be read; callers guard the zero case
}

/// exp[i] = α^i, duplicated once so `exp[log a + log b]` needs no reduction.
const GF_EXP: [u8; 510] = build_exp();
const GF_LOG: [u8; 256] = build_log();

#[inline]
#[must_use]
pub fn gf_mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        GF_EXP[GF_LOG[a as usize] as usize + GF_LOG[b as usize] as usize]
    }
}

/// Panics on division by zero.
#[inline]
#[must_use]
pub fn gf_div(a: u8, b: u8) -> u8 {
    assert!(b != 0, "GF(2^8) division by zero");
    if a == 0 {
        0
    } else {
        GF_EXP[GF_LOG[a as usize] as usize + 255 - GF_LOG[b as usize] as usize]
    }
}

/// Discrete log base α; defined for nonzero arguments only.
#[inline]
#[must_use]
pub fn gf_log(a: u8) -> u8 {
    assert!(a != 0, "discrete log of zero");
    GF_LOG[a as usize]
}

// ---------------------------------------------------------------------------
// Sub-block encode/decode.
// ---------------------------------------------------------------------------

/// Result of decoding one sub-block. `position` indexes the codeword as
/// stored: data symbols 0..len, then parity high, parity low.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DecodeOutcome {
    NoError,
    Corrected { position: usize, magnitude: u8 },
    DetectedUncorrectable,
}

/// Flit-level verdict after all three sub-blocks are decoded.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FlitVerdict {
    Clean,
    Corrected,
    DetectedUncorrectable,
}

/// Systematic encode: 2 parity symbols (remainder of data·x^2 mod g),
/// high-degree symbol first. Data length must be 83 or 84.
#[must_use]
pub fn rs_encode_subblock(data: &[u8]) -> [u8; PARITY_LEN] {
    assert!(data.len() == 83 || data.len() == 84, "sub-block data must be 83 or 84 bytes");
    encode_parity(data.iter().copied())
}

fn encode_parity(data: impl Iterator<Item = u8>) -> [u8; PARITY_LEN] {
    let (mut r1, mut r0) = (0u8, 0u8);
    for d in data {
        let f = d ^ r1;
        r1 = r0 ^ gf_mul(f, RS_GENERATOR[0]);
        r0 = gf_mul(f, RS_GENERATOR[1]);
    }
    [r1, r0]
}

/// Syndrome-based single-error decode, correcting `codeword` in place.
/// `codeword` is data ‖ parity, 85 or 86 bytes.
///
/// The received polynomial has the first data symbol at degree len-1 and
/// parity at degrees 1, 0; the shortened (implicitly zero) positions occupy
/// degrees len..255. A single error of magnitude m at degree d gives
/// syndromes S0 = m, S1 = m·α^d, so d = log(S1/S0). d beyond the real span
/// can only come from >1 errors and is flagged, never applied; a correction
/// can therefore never touch a shortened position.
#[must_use]
pub fn rs_decode_subblock(codeword: &mut [u8]) -> DecodeOutcome {
    assert!(codeword.len() == 85 || codeword.len() == 86, "codeword must be 85 or 86 bytes");
    let (mut s0, mut s1) = (0u8, 0u8);
    for &sym in codeword.iter() {
        s0 ^= sym;
        s1 = gf_mul(s1, GF_ALPHA) ^ sym;
    }
    match (s0, s1) {
        (0, 0) => DecodeOutcome::NoError,
        (0, _) | (_, 0) => DecodeOutcome::DetectedUncorrectable,
        (s0, s1) => {
            let degree = (gf_log(s1) as usize + 255 - gf_log(s0) as usize) % 255;
            let top_degree = codeword.len() - 1;
            if degree > top_degree {
                // locator points into the shortened zero span
                return DecodeOutcome::DetectedUncorrectable;
            }
            let position = top_degree - degree;
            codeword[position] ^= s0;
            DecodeOutcome::Corrected { position, magnitude: s0 }
        }
    }
}

// ---------------------------------------------------------------------------
// Interleaving and whole-flit encode/decode.
// ---------------------------------------------------------------------------

/// One de-interleaved sub-block (data only or data+parity), fixed-capacity.
#[derive(Clone, Copy)]
pub struct SubBlockBuf {
    bytes: [u8; MAX_CODEWORD],
    len: usize,
}

impl SubBlockBuf {
    #[must_use]
    pub fn as_slice(&self) -> &[u8] {
        &self.bytes[..self.len]
    }

    fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.bytes[..self.len]
    }
}

/// Splits the 250-byte core: byte i → sub-block (i mod 3), position ⌊i/3⌋.
/// Any 3 consecutive core bytes land in 3 distinct sub-blocks.
#[must_use]
pub fn interleave(core: &[u8; CORE_BYTES]) -> [SubBlockBuf; NUM_SUBBLOCKS] {
    let mut out = [SubBlockBuf { bytes: [0u8; MAX_CODEWORD], len: 0 }; NUM_SUBBLOCKS];
    for (j, sb) in out.iter_mut().enumerate() {
        sb.len = SUBBLOCK_DATA_LEN[j];
    }
    for (i, &b) in core.iter().enumerate() {
        out[i % 3].bytes[i / 3] = b;
    }
    out
}

/// Inverse of [`interleave`] (data portions only).
#[must_use]
pub fn deinterleave(subblocks: &[SubBlockBuf; NUM_SUBBLOCKS]) -> [u8; CORE_BYTES] {
    let mut core = [0u8; CORE_BYTES];
    for (i, b) in core.iter_mut().enumerate() {
        *b = subblocks[i % 3].bytes[i / 3];
    }
    core
}

/// Appends the 3x2 parity bytes: wire = core ‖ p0_hi p0_lo p1_hi p1_lo p2_hi p2_lo.
#[must_use]
pub fn fec_encode_flit(core: &[u8; CORE_BYTES]) -> [u8; WIRE_BYTES] {
    let mut wire = [0u8; WIRE_BYTES];
    wire[..CORE_BYTES].copy_from_slice(core);
    for j in 0..NUM_SUBBLOCKS {
        let parity = encode_parity(core.iter().skip(j).step_by(3).copied());
        wire[CORE_BYTES + 2 * j] = parity[0];
        wire[CORE_BYTES + 2 * j + 1] = parity[1];
    }
    wire
}

/// Whole-flit decode result.
pub struct FlitDecode {
    /// Core after per-sub-block correction (valid data only when the verdict
    /// is not `DetectedUncorrectable`).
    pub core: [u8; CORE_BYTES],
    pub outcomes: [DecodeOutcome; NUM_SUBBLOCKS],
    pub verdict: FlitVerdict,
}

/// Decodes all three sub-blocks (parity symbols are part of each codeword
/// and may themselves be corrected), reassembles the corrected core.
#[must_use]
pub fn fec_decode_flit(wire: &[u8; WIRE_BYTES]) -> FlitDecode {
    let mut core_arr = [0u8; CORE_BYTES];
    core_arr.copy_from_slice(&wire[..CORE_BYTES]);
    let mut subblocks = interleave(&core_arr);
    let mut outcomes = [DecodeOutcome::NoError; NUM_SUBBLOCKS];
    for j in 0..NUM_SUBBLOCKS {
        let data_len = SUBBLOCK_DATA_LEN[j];
        subblocks[j].bytes[data_len] = wire[CORE_BYTES + 2 * j];
        subblocks[j].bytes[data_len + 1] = wire[CORE_BYTES + 2 * j + 1];
        subblocks[j].len = data_len + PARITY_LEN;
        outcomes[j] = rs_decode_subblock(subblocks[j].as_mut_slice());
        subblocks[j].len = data_len;
    }
    let verdict = if outcomes.iter().any(|o| matches!(o, DecodeOutcome::DetectedUncorrectable)) {
        FlitVerdict::DetectedUncorrectable
    } else if outcomes.iter().any(|o| matches!(o, DecodeOutcome::Corrected { .. })) {
        FlitVerdict::Corrected
    } else {
        FlitVerdict::Clean
    };
    FlitDecode { core: deinterleave(&subblocks), outcomes, verdict }
}
