//! Bit-level channel: CRC, convolutional code, QAM over AWGN, soft Viterbi.

mod conv;
mod crc;
mod modem;

pub use conv::ConvCode;
pub use crc::{bytes_to_bits, crc16, crc_append, crc_check, CrcCheck, CRC_BITS};
pub use modem::{awgn, noise_var, Constellation, LLR_CLAMP};

use crate::scalar::Real;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("need more than 16 bits for a CRC check, got {0}")]
    TooShortForCrc(usize),
    #[error("invalid convolutional code: {0}")]
    BadCode(String),
    #[error("llr length mismatch: expected an even count of at least {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unsupported modulation order {0}")]
    UnsupportedOrder(usize),
    #[error("label assignment is not a permutation")]
    BadAssignment,
    #[error("empty payload")]
    EmptyPayload,
    #[error("bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
}

pub const DEFAULT_BANDWIDTH_HZ: f64 = 5.0e4;

/// AWGN channel settings. `snr_db` is Es/N0 per transmitted symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelCfg<F> {
    pub snr_db: F,
    pub bandwidth_hz: F,
    pub seed: u64,
}

impl<F: Real> ChannelCfg<F> {
    pub fn new(snr_db: F, seed: u64) -> Self {
        Self { snr_db, bandwidth_hz: F::lit(DEFAULT_BANDWIDTH_HZ), seed }
    }

    pub fn with_bandwidth(mut self, hz: F) -> Result<Self, PhyError> {
        if !(hz > F::zero()) || !hz.is_finite() {
            return Err(PhyError::BadBandwidth(hz.to_f64_lossy()));
        }
        self.bandwidth_hz = hz;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketOutcome {
    /// Decoded payload, whether or not the CRC passed.
    pub bits: Vec<bool>,
    pub crc_ok: bool,
    pub symbols: usize,
}

/// Symbols needed for a payload of `len` bits.
pub fn packet_symbols(len: usize, code: &ConvCode, bits_per_symbol: usize) -> usize {
    code.coded_len(len + CRC_BITS).div_ceil(bits_per_symbol)
}

/// One packet through CRC, encoder, modulator, AWGN, demodulator, Viterbi
/// and CRC check. The noise comes from channel substream `packet_index`.
pub fn send_packet<F: Real>(
    payload: &[bool],
    code: &ConvCode,
    constellation: &Constellation<F>,
    cfg: &ChannelCfg<F>,
    packet_index: u64,
) -> Result<PacketOutcome, PhyError> {
    if payload.is_empty() {
        return Err(PhyError::EmptyPayload);
    }
    let coded = code.encode(&crc_append(payload));
    let (tx, pad) = constellation.modulate(&coded);
    let n0 = noise_var(cfg.snr_db);
    let rx = awgn(&tx, n0, cfg.seed, packet_index);
    let mut llrs = constellation.demod_llr(&rx, n0);
    llrs.truncate(llrs.len() - pad);
    let decoded = code.viterbi_decode(&llrs)?;
    let check = crc_check(&decoded)?;
    Ok(PacketOutcome { bits: check.payload, crc_ok: check.ok, symbols: tx.len() })
}
