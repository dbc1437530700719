//! Rate-1/2 feed-forward convolutional code with zero-flush termination and
//! its soft-decision Viterbi decoder.

use super::PhyError;
use crate::scalar::Real;

/// Rate-1/2 code with constraint length `k` and two generators.
///
/// Generator bit `k-1` taps the current input and bit 0 the oldest stored
/// input, so `(7, 5)` octal is the textbook K=3 code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvCode {
    k: u32,
    polys: [u32; 2],
}

impl ConvCode {
    pub fn new(k: u32, g0: u32, g1: u32) -> Result<Self, PhyError> {
        if !(2..=16).contains(&k) {
            return Err(PhyError::BadCode(format!("constraint length {k} outside 2..=16")));
        }
        let top = 1u32 << (k - 1);
        if g0 >= 1 << k || g1 >= 1 << k {
            return Err(PhyError::BadCode(format!("generators {g0:o},{g1:o} exceed K={k}")));
        }
        if ![g0, g1].iter().any(|&g| g & top != 0 && g & 1 != 0) {
            return Err(PhyError::BadCode("no generator taps both ends of the register".into()));
        }
        Ok(Self { k, polys: [g0, g1] })
    }

    /// K=7, generators 171/133 octal.
    pub fn k7() -> Self {
        Self { k: 7, polys: [0o171, 0o133] }
    }

    pub fn constraint_length(&self) -> u32 {
        self.k
    }

    pub fn generators(&self) -> [u32; 2] {
        self.polys
    }

    /// Coded length for a message of `len` bits, flush included.
    pub fn coded_len(&self, len: usize) -> usize {
        2 * (len + self.k as usize - 1)
    }

    fn states(&self) -> usize {
        1 << (self.k - 1)
    }

    fn outputs(&self, reg: u32) -> [bool; 2] {
        [(reg & self.polys[0]).count_ones() & 1 == 1, (reg & self.polys[1]).count_ones() & 1 == 1]
    }

    pub fn encode(&self, bits: &[bool]) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.coded_len(bits.len()));
        let mut state = 0u32;
        let flush = std::iter::repeat_n(false, self.k as usize - 1);
        for b in bits.iter().copied().chain(flush) {
            let reg = ((b as u32) << (self.k - 1)) | state;
            out.extend_from_slice(&self.outputs(reg));
            state = reg >> 1;
        }
        out
    }

    /// Maximum-likelihood message for the terminated trellis given per-bit
    /// LLRs `log P(0)/P(1)`. Flush bits are stripped.
    pub fn viterbi_decode<F: Real>(&self, llrs: &[F]) -> Result<Vec<bool>, PhyError> {
        let tail = self.k as usize - 1;
        if !llrs.len().is_multiple_of(2) || llrs.len() < 2 * (tail + 1) {
            return Err(PhyError::LengthMismatch { expected: 2 * (tail + 1), got: llrs.len() });
        }
        let steps = llrs.len() / 2;
        let msg_len = steps - tail;
        let s_count = self.states();
        let mask = s_count as u32 - 1;
        let shift = self.k - 2;

        let table: Vec<[[bool; 2]; 2]> = (0..s_count as u32)
            .map(|s| [self.outputs(s), self.outputs((1 << (self.k - 1)) | s)])
            .collect();

        let mut metric = vec![F::neg_infinity(); s_count];
        metric[0] = F::zero();
        let mut next = vec![F::neg_infinity(); s_count];
        // survivor predecessor LSB per (step, state)
        let mut decisions = vec![0u8; steps * s_count];

        for t in 0..steps {
            let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
            next.iter_mut().for_each(|m| *m = F::neg_infinity());
            let max_bit = if t < msg_len { 1 } else { 0 };
            for s in 0..s_count {
                let m = metric[s];
                if m == F::neg_infinity() {
                    continue;
                }
                for bit in 0..=max_bit {
                    let [c0, c1] = table[s][bit];
                    let bm = (if c0 { -l0 } else { l0 }) + (if c1 { -l1 } else { l1 });
                    let ns = ((bit as u32) << shift | (s as u32 >> 1)) as usize;
                    let cand = m + bm;
                    if cand > next[ns] {
                        next[ns] = cand;
                        decisions[t * s_count + ns] = (s & 1) as u8;
                    }
                }
            }
            std::mem::swap(&mut metric, &mut next);
        }

        let mut bits = vec![false; steps];
        let mut ns = 0u32;
        for t in (0..steps).rev() {
            bits[t] = ns >> shift == 1;
            ns = ((ns << 1) & mask) | decisions[t * s_count + ns as usize] as u32;
        }
        bits.truncate(msg_len);
        Ok(bits)
    }
}

impl Default for ConvCode {
    fn default() -> Self {
        Self::k7()
    }
}
