//! Flit-level interconnect reliability simulator and protocol library.
//!
//! Models the protection stack of a 256-byte-flit switched serial
//! interconnect (PCIe 6.0 / CXL 3.0 class): CRC-64 over header+payload,
//! shortened Reed-Solomon FEC with 3-way interleaving, explicit sequence
//! numbers with ACK piggybacking, and go-back-N retry. A second protocol
//! mode moves the CRC to the endpoints and folds an *implicit* sequence
//! number into it, so flit drops, duplicates, and reordering are caught
//! end-to-end even across stateless switches.
//!
//! Modules, bottom-up:
//! - [`flit_codec`]: header packing, CRC-64, baseline and implicit-sequence
//!   flit encode/verify.
//! - [`fec_rs`]: GF(2^8) shortened Reed-Solomon single-symbol-correct codec
//!   and the 3-way interleaver.
//! - [`error_model`]: seeded bit-flip and burst-error injection with exact
//!   ground-truth masks.
//! - [`link_layer`]: endpoint transmit/receive state machines: replay
//!   buffer, ACK coalescing, piggybacking, go-back-N.
//! - [`switch`]: stateless intermediate node (FEC terminate/re-encode,
//!   drop-or-forward, internal-corruption fault hook).
//! - [`sim_engine`]: slotted-time Monte Carlo simulator over a linear
//!   topology plus the delivered-stream failure classifier.
//! - [`analytics`]: closed-form reliability (FIT) and bandwidth-loss
//!   formulas, independent of the simulator.

pub mod analytics;
pub mod error_model;
pub mod fec_rs;
pub mod flit_codec;
pub mod link_layer;
pub mod sim_engine;
pub mod switch;
