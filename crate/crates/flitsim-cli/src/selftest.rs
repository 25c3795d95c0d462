//! Exhaustive codec property runs, printed one line per property. These are
//! the guarantees the rest of the stack leans on; any violation is a library
//! bug, so failures assert (exit code 1) rather than returning an error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use flitsim::fec_rs::{fec_decode_flit, fec_encode_flit, FlitVerdict};
use flitsim::flit_codec::{
    pack_header, unpack_header, FlitCodec, FlitHeader, ReplayCmd, SeqNum, CORE_BYTES,
    PAYLOAD_BYTES, SEQ_SPACE, WIRE_BYTES,
};

const CORE_BITS: usize = CORE_BYTES * 8;

pub fn run_all(verbose: bool) {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5e1f);
    header_round_trip();
    crc_single_bits_and_bursts(&mut rng, verbose);
    isn_cross_pairs(&mut rng, verbose);
    isn_zero_identity(&mut rng);
    fec_single_symbol_sweep(&mut rng);
    fec_three_byte_bursts(&mut rng);
    println!("ok: all codec self-tests passed");
}

fn random_payload(rng: &mut ChaCha12Rng) -> [u8; PAYLOAD_BYTES] {
    let mut payload = [0u8; PAYLOAD_BYTES];
    rng.fill(&mut payload[..]);
    payload
}

fn header_round_trip() {
    let mut checked = 0u32;
    for fsn in 0..SEQ_SPACE {
        for cmd in [ReplayCmd::Seq, ReplayCmd::Ack, ReplayCmd::NackGoBackN, ReplayCmd::NackSingle]
        {
            let packed = pack_header(SeqNum::new(fsn), cmd);
            let header = unpack_header(packed);
            assert_eq!(header.fsn, SeqNum::new(fsn));
            assert_eq!(header.cmd, cmd);
            checked += 1;
        }
    }
    println!("ok header_round_trip: {checked} encodings");
}

/// Every single-bit flip and every burst of span <= 64 bits anywhere in the
/// 250-byte protected region must fail verification. Burst patterns pin the
/// first and last bit of the span (that pair defines the span) and draw the
/// interior at random; the guarantee covers every interior, so any sample
/// must detect.
fn crc_single_bits_and_bursts(rng: &mut ChaCha12Rng, verbose: bool) {
    let codec = FlitCodec::default();
    let payload = random_payload(rng);
    let clean = codec.encode_baseline(FlitHeader::new(SeqNum::new(321), ReplayCmd::Seq), &payload);
    let clean_core = clean.to_core();
    assert!(codec.verify_baseline(&clean));

    let mut checked = 0u64;
    let mut verify_corrupt = |bits: &[usize]| {
        let mut core = clean_core;
        for &bit in bits {
            core[bit / 8] ^= 1 << (bit % 8);
        }
        let flit = flitsim::flit_codec::Flit::from_core(&core);
        assert!(
            !codec.verify_baseline(&flit),
            "corruption at bits {bits:?} passed CRC verification"
        );
        checked += 1;
    };

    for bit in 0..CORE_BITS {
        verify_corrupt(&[bit]);
    }
    for span in 2..=64usize {
        for start in 0..=(CORE_BITS - span) {
            let mut bits = vec![start, start + span - 1];
            for interior in (start + 1)..(start + span - 1) {
                if rng.gen_bool(0.5) {
                    bits.push(interior);
                }
            }
            verify_corrupt(&bits);
        }
        if verbose {
            eprintln!("  burst span {span} done");
        }
    }
    println!("ok crc_burst_detection: {checked} corruptions, all detected");
}

/// The sequence fold changes at most 10 payload bits, far inside the 64-bit
/// burst guarantee, so verification against the wrong expected sequence
/// number must fail for every (seq, eseq) pair with seq != eseq.
fn isn_cross_pairs(rng: &mut ChaCha12Rng, verbose: bool) {
    let codec = FlitCodec::default();
    let payload = random_payload(rng);
    let header = FlitHeader::new(SeqNum::ZERO, ReplayCmd::Seq);
    let mut pairs = 0u64;
    for seq in 0..SEQ_SPACE {
        let flit = codec.encode_isn(header, &payload, SeqNum::new(seq));
        for eseq in 0..SEQ_SPACE {
            let ok = codec.verify_isn(&flit, SeqNum::new(eseq));
            assert_eq!(
                ok,
                seq == eseq,
                "verify_isn(seq={seq}, eseq={eseq}) returned {ok}"
            );
            if seq != eseq {
                pairs += 1;
            }
        }
        if verbose && seq % 256 == 0 {
            eprintln!("  seq {seq} done");
        }
    }
    println!("ok isn_cross_pairs: {pairs} mismatched pairs, all rejected");
}

fn isn_zero_identity(rng: &mut ChaCha12Rng) {
    let codec = FlitCodec::default();
    for _ in 0..64 {
        let payload = random_payload(rng);
        let header = FlitHeader::new(SeqNum::new(rng.gen_range(0..SEQ_SPACE)), ReplayCmd::Seq);
        let isn = codec.encode_isn(header, &payload, SeqNum::ZERO);
        let baseline = codec.encode_baseline(header, &payload);
        assert_eq!(isn, baseline, "seq=0 fold must be the identity");
    }
    println!("ok isn_zero_identity: 64 flits bit-identical");
}

fn fec_single_symbol_sweep(rng: &mut ChaCha12Rng) {
    let mut core = [0u8; CORE_BYTES];
    rng.fill(&mut core[..]);
    let clean = fec_encode_flit(&core);
    let mut checked = 0u64;
    for pos in 0..WIRE_BYTES {
        for _ in 0..8 {
            let magnitude = rng.gen_range(1..=255u8);
            let mut wire = clean;
            wire[pos] ^= magnitude;
            let decode = fec_decode_flit(&wire);
            assert_ne!(decode.verdict, FlitVerdict::DetectedUncorrectable, "pos {pos}");
            assert_eq!(decode.core, core, "single error at {pos} not corrected exactly");
            checked += 1;
        }
    }
    println!("ok fec_single_symbol: {checked} errors corrected exactly");
}

fn fec_three_byte_bursts(rng: &mut ChaCha12Rng) {
    let mut core = [0u8; CORE_BYTES];
    rng.fill(&mut core[..]);
    let clean = fec_encode_flit(&core);
    let mut checked = 0u64;
    // a 3-byte burst lands one symbol in each interleaved sub-block
    for start in 0..=(CORE_BYTES - 3) {
        let mut wire = clean;
        for offset in 0..3 {
            wire[start + offset] ^= rng.gen_range(1..=255u8);
        }
        let decode = fec_decode_flit(&wire);
        assert_eq!(decode.core, core, "3-byte burst at {start} not corrected");
        checked += 1;
    }
    println!("ok fec_burst3: {checked} bursts corrected exactly");
}
