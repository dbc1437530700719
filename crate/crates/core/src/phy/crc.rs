//! CRC-16/CCITT-FALSE over bit strings (poly 0x1021, init 0xFFFF, MSB first,
//! no reflection, no final xor).

use super::PhyError;

pub const CRC_BITS: usize = 16;
const POLY: u16 = 0x1021;
const INIT: u16 = 0xFFFF;

pub fn crc16(bits: &[bool]) -> u16 {
    let mut crc = INIT;
    for &b in bits {
        let feedback = ((crc >> 15) & 1 == 1) ^ b;
        crc <<= 1;
        if feedback {
            crc ^= POLY;
        }
    }
    crc
}

/// `payload ‖ crc16(payload)`, CRC sent MSB first.
pub fn crc_append(payload: &[bool]) -> Vec<bool> {
    let crc = crc16(payload);
    let mut out = Vec::with_capacity(payload.len() + CRC_BITS);
    out.extend_from_slice(payload);
    out.extend((0..CRC_BITS).rev().map(|i| (crc >> i) & 1 == 1));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrcCheck {
    pub ok: bool,
    pub payload: Vec<bool>,
}

pub fn crc_check(bits: &[bool]) -> Result<CrcCheck, PhyError> {
    if bits.len() <= CRC_BITS {
        return Err(PhyError::TooShortForCrc(bits.len()));
    }
    let (payload, tail) = bits.split_at(bits.len() - CRC_BITS);
    let received = tail.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16);
    Ok(CrcCheck { ok: crc16(payload) == received, payload: payload.to_vec() })
}

/// Unpacks bytes MSB first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1)).collect()
}
