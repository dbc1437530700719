//! Model-driven arithmetic coding of token sequences and predictability-based
//! token dropping.
//!
//! The coder is a 32-bit integer range coder emitting single bits. Model
//! distributions are quantized to 16-bit frequencies with every symbol kept at
//! weight one or more, and carries are propagated back into the bits already
//! written. Termination costs exactly two bits, so a stream is never longer
//! than the ideal code length plus quantization loss plus two bits.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::predictor::{PredictError, ProbModel};
use crate::tokens::{MaskedSequence, SideInfo, Slot, TokenSequence, TokensError};

const PROB_BITS: u32 = 16;
const PROB_TOTAL: u32 = 1 << PROB_BITS;
const TOP: u64 = 1 << 32;
const HALF: u64 = 1 << 31;
const FLUSH_BITS: usize = 2;

const FILE_MAGIC: &[u8; 4] = b"TOKZ";
const FILE_VERSION: u16 = 1;
const NO_LABEL: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("symbol {id} at position {pos} has zero model probability")]
    ZeroProbability { pos: usize, id: u32 },
    #[error("model returned an invalid distribution at position {0}")]
    BadDistribution(usize),
    #[error("codebook of size {0} exceeds the 16-bit frequency resolution")]
    CodebookTooLarge(u32),
    #[error("bitstream exhausted")]
    Exhausted,
    #[error("bitstream length does not match the decoded symbols")]
    TrailingBits,
    #[error("keep fraction must be in (0, 1], got {0}")]
    BadKeepFraction(f64),
    #[error("bad compressed-file magic")]
    BadMagic,
    #[error("unsupported compressed-file version {0}")]
    BadVersion(u16),
    #[error("compressed file truncated")]
    Truncated,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Tokens(#[from] TokensError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Growable bit string, MSB-first within each byte.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuffer {
    bytes: Vec<u8>,
    len: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `len` bits stored in `bytes`. Bits past `len` are cleared.
    pub fn from_bytes(mut bytes: Vec<u8>, len: usize) -> Option<Self> {
        if len > bytes.len() * 8 || bytes.len() != len.div_ceil(8) {
            return None;
        }
        if !len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xFFu8 << (8 - len % 8);
        }
        Some(Self { bytes, len })
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut b = Self::new();
        bits.iter().for_each(|&x| b.push(x));
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Bytes with the final byte zero-padded.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Bit `i`; positions past the end read as zero.
    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    fn set(&mut self, i: usize, bit: bool) {
        let mask = 0x80 >> (i % 8);
        if bit {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    /// Adds one at the last written bit, rippling the carry leftwards.
    fn increment(&mut self) {
        let mut i = self.len;
        while i > 0 {
            i -= 1;
            if self.get(i) {
                self.set(i, false);
            } else {
                self.set(i, true);
                return;
            }
        }
        panic!("carry out of the coded interval");
    }

    /// First `len` bits.
    pub fn truncated(&self, len: usize) -> Self {
        let mut b = self.clone();
        if len < b.len {
            b.bytes.truncate(len.div_ceil(8));
            b.len = len;
            if !len.is_multiple_of(8) {
                let last = b.bytes.len() - 1;
                b.bytes[last] &= 0xFFu8 << (8 - len % 8);
            }
        }
        b
    }
}

/// Quantizes a distribution to integer frequencies summing to 2^16, each at
/// least one. The rounding remainder goes to the most probable symbol.
pub fn quantize(probs: &[f64]) -> Option<Vec<u32>> {
    let q = probs.len() as u32;
    if q == 0 || q > PROB_TOTAL || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return None;
    }
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return None;
    }
    let spare = (PROB_TOTAL - q) as f64;
    let mut freqs: Vec<u32> = probs.iter().map(|&p| 1 + ((p / sum) * spare).floor() as u32).collect();
    let used: u32 = freqs.iter().sum();
    let best = crate::predictor::argmax(probs);
    freqs[best] += PROB_TOTAL - used;
    Some(freqs)
}

struct Encoder {
    low: u64,
    range: u64,
    out: BitBuffer,
}

impl Encoder {
    fn new() -> Self {
        Self { low: 0, range: TOP, out: BitBuffer::new() }
    }

    fn encode(&mut self, cum: u32, freq: u32) {
        let r = self.range >> PROB_BITS;
        self.low += r * cum as u64;
        self.range = r * freq as u64;
        if self.low >= TOP {
            self.out.increment();
            self.low -= TOP;
        }
        while self.range < HALF {
            self.out.push(self.low & HALF != 0);
            self.low = (self.low << 1) & (TOP - 1);
            self.range <<= 1;
        }
    }

    fn finish(mut self) -> BitBuffer {
        let step = 1u64 << (32 - FLUSH_BITS);
        let mut v = self.low.div_ceil(step) * step;
        if v >= TOP {
            self.out.increment();
            v -= TOP;
        }
        for i in 0..FLUSH_BITS {
            self.out.push(v & (HALF >> i) != 0);
        }
        self.out
    }
}

struct Decoder<'a> {
    bits: &'a BitBuffer,
    diff: u64,
    range: u64,
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn new(bits: &'a BitBuffer) -> Result<Self, CodingError> {
        if bits.len() < FLUSH_BITS {
            return Err(CodingError::Exhausted);
        }
        let mut diff = 0u64;
        for i in 0..32 {
            diff = (diff << 1) | bits.get(i) as u64;
        }
        Ok(Self { bits, diff, range: TOP, pos: 32 })
    }

    /// Index one past the last bit a well-formed stream ever reads.
    fn limit(&self) -> usize {
        self.bits.len() + 32 - FLUSH_BITS
    }

    fn decode(&mut self, freqs: &[u32]) -> Result<usize, CodingError> {
        let r = self.range >> PROB_BITS;
        let target = (self.diff / r).min(PROB_TOTAL as u64 - 1) as u32;
        let mut cum = 0u32;
        let mut sym = freqs.len() - 1;
        for (i, &f) in freqs.iter().enumerate() {
            if target < cum + f {
                sym = i;
                break;
            }
            cum += f;
        }
        self.diff -= r * cum as u64;
        self.range = r * freqs[sym] as u64;
        while self.range < HALF {
            if self.pos >= self.limit() {
                return Err(CodingError::Exhausted);
            }
            self.diff = (self.diff << 1) | self.bits.get(self.pos) as u64;
            self.pos += 1;
            self.range <<= 1;
        }
        Ok(sym)
    }
}

fn check_coder_model(model: &dyn ProbModel, q: u32) -> Result<(), CodingError> {
    if model.q() != q {
        return Err(PredictError::CodebookMismatch { model: model.q(), seq: q }.into());
    }
    if !model.capabilities().causal {
        return Err(PredictError::NotCausal.into());
    }
    if q > PROB_TOTAL {
        return Err(CodingError::CodebookTooLarge(q));
    }
    Ok(())
}

/// Compresses `seq` under the causal `model`.
pub fn ac_encode(model: &dyn ProbModel, seq: &TokenSequence, side: &SideInfo) -> Result<BitBuffer, CodingError> {
    check_coder_model(model, seq.q())?;
    let ids = seq.ids();
    let mut enc = Encoder::new();
    for (pos, &id) in ids.iter().enumerate() {
        let probs = model.next_token(&ids[..pos], side)?;
        if probs.get(id as usize).is_some_and(|&p| p == 0.0) {
            return Err(CodingError::ZeroProbability { pos, id });
        }
        let freqs = quantize(&probs).filter(|f| f.len() == seq.q() as usize).ok_or(CodingError::BadDistribution(pos))?;
        let cum: u32 = freqs[..id as usize].iter().sum();
        enc.encode(cum, freqs[id as usize]);
    }
    Ok(enc.finish())
}

/// Inverse of [`ac_encode`] for a stream of `n` tokens.
pub fn ac_decode(
    model: &dyn ProbModel,
    bits: &BitBuffer,
    n: usize,
    side: &SideInfo,
) -> Result<TokenSequence, CodingError> {
    let q = model.q();
    check_coder_model(model, q)?;
    if n == 0 {
        return Err(TokensError::EmptySequence.into());
    }
    let mut dec = Decoder::new(bits)?;
    let mut ids = Vec::with_capacity(n);
    for pos in 0..n {
        let probs = model.next_token(&ids, side)?;
        let freqs = quantize(&probs).filter(|f| f.len() == q as usize).ok_or(CodingError::BadDistribution(pos))?;
        ids.push(dec.decode(&freqs)? as u32);
    }
    if dec.pos != dec.limit() {
        return Err(CodingError::TrailingBits);
    }
    Ok(TokenSequence::new(q, ids)?)
}

/// Masks the `⌊(1 − keep_fraction)·N⌋` tokens the model recovers best from
/// their surroundings (leave-one-out probability of the true token), ties to
/// the lower position.
pub fn drop_tokens(
    model: &dyn ProbModel,
    seq: &TokenSequence,
    side: &SideInfo,
    keep_fraction: f64,
) -> Result<MaskedSequence, CodingError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(CodingError::BadKeepFraction(keep_fraction));
    }
    if model.q() != seq.q() {
        return Err(PredictError::CodebookMismatch { model: model.q(), seq: seq.q() }.into());
    }
    if !model.capabilities().bidirectional {
        return Err(PredictError::NotBidirectional.into());
    }
    let n = seq.len();
    let drop = (((1.0 - keep_fraction) * n as f64) + 1e-9).floor() as usize;
    let mut masked = MaskedSequence::from_sequence(seq);
    if drop == 0 {
        return Ok(masked);
    }
    let slots: Vec<Slot> = masked.slots().to_vec();
    let positions: Vec<usize> = (0..n).collect();
    let preds = model.predict_many(&slots, &positions, side)?;
    let mut scored: Vec<(usize, f64)> =
        preds.iter().enumerate().map(|(i, p)| (i, p.probs[seq.ids()[i] as usize])).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(pos, _) in scored.iter().take(drop) {
        masked.mask(pos);
    }
    Ok(masked)
}

/// Header of a compressed token file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressedHeader {
    pub q: u32,
    pub n: u32,
    pub label: Option<u32>,
}

/// Writes a `TOKZ` file. A missing label is stored as `0xFFFF_FFFF`.
pub fn write_compressed<W: Write>(mut w: W, header: &CompressedHeader, bits: &BitBuffer) -> Result<(), CodingError> {
    w.write_all(FILE_MAGIC)?;
    w.write_all(&FILE_VERSION.to_le_bytes())?;
    w.write_all(&header.q.to_le_bytes())?;
    w.write_all(&header.n.to_le_bytes())?;
    w.write_all(&header.label.unwrap_or(NO_LABEL).to_le_bytes())?;
    w.write_all(&(bits.len() as u64).to_le_bytes())?;
    w.write_all(bits.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_compressed<R: Read>(mut r: R) -> Result<(CompressedHeader, BitBuffer), CodingError> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], CodingError> {
        let mut b = [0u8; N];
        r.read_exact(&mut b).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => CodingError::Truncated,
            _ => CodingError::Io(e),
        })?;
        Ok(b)
    }
    if &take::<4, _>(&mut r)? != FILE_MAGIC {
        return Err(CodingError::BadMagic);
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != FILE_VERSION {
        return Err(CodingError::BadVersion(version));
    }
    let q = u32::from_le_bytes(take(&mut r)?);
    let n = u32::from_le_bytes(take(&mut r)?);
    let label = u32::from_le_bytes(take(&mut r)?);
    let len = u64::from_le_bytes(take(&mut r)?) as usize;
    let mut bytes = vec![0u8; len.div_ceil(8)];
    r.read_exact(&mut bytes).map_err(|_| CodingError::Truncated)?;
    let bits = BitBuffer::from_bytes(bytes, len).ok_or(CodingError::Truncated)?;
    Ok((CompressedHeader { q, n, label: (label != NO_LABEL).then_some(label) }, bits))
}
