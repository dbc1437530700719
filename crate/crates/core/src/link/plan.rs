use rand::seq::SliceRandom;

use super::LinkError;
use crate::rng::{substream, Purpose};
use crate::tokens::{bits_for, TokenSequence};

/// Assignment of token positions to packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketPlan {
    tokens_per_packet: usize,
    packets: Vec<Vec<usize>>,
    interleave_seed: Option<u64>,
    n: usize,
}

impl PacketPlan {
    /// Packets of `p` positions over `0..n`. With a seed the positions are
    /// shuffled first and each packet holds its share in ascending order.
    pub fn new(n: usize, p: usize, interleave_seed: Option<u64>) -> Result<Self, LinkError> {
        if n == 0 || p == 0 {
            return Err(LinkError::BadPlan(format!("need N ≥ 1 and P ≥ 1, got N={n}, P={p}")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(seed) = interleave_seed {
            order.shuffle(&mut substream(seed, Purpose::Interleaver, 0));
        }
        let packets = order
            .chunks(p)
            .map(|c| {
                let mut v = c.to_vec();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(Self { tokens_per_packet: p, packets, interleave_seed, n })
    }

    pub fn tokens_per_packet(&self) -> usize {
        self.tokens_per_packet
    }

    pub fn packets(&self) -> &[Vec<usize>] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn sequence_len(&self) -> usize {
        self.n
    }

    pub fn interleave_seed(&self) -> Option<u64> {
        self.interleave_seed
    }
}

/// Serializes ids MSB first with `bits` bits each.
pub fn ids_to_bits(ids: impl IntoIterator<Item = u32>, bits: u32) -> Vec<bool> {
    ids.into_iter().flat_map(|id| (0..bits).rev().map(move |i| (id >> i) & 1 == 1)).collect()
}

/// Inverse of [`ids_to_bits`]. Values at or above `q` are clamped to `q - 1`.
pub fn bits_to_ids(bits: &[bool], q: u32) -> Vec<u32> {
    let width = bits_for(q) as usize;
    bits.chunks(width)
        .map(|c| c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32).min(q - 1))
        .collect()
}

pub fn packetize(
    seq: &TokenSequence,
    p: usize,
    interleave: bool,
    seed: u64,
) -> Result<(PacketPlan, Vec<Vec<bool>>), LinkError> {
    let plan = PacketPlan::new(seq.len(), p, interleave.then_some(seed))?;
    let payloads = payloads_for(&plan, seq)?;
    Ok((plan, payloads))
}

/// Payload bits of every packet of `plan` for `seq`.
pub fn payloads_for(plan: &PacketPlan, seq: &TokenSequence) -> Result<Vec<Vec<bool>>, LinkError> {
    if plan.sequence_len() != seq.len() {
        return Err(LinkError::BadPlan(format!("plan covers {} positions, sequence has {}", plan.n, seq.len())));
    }
    let bits = bits_for(seq.q());
    Ok(plan.packets().iter().map(|pos| ids_to_bits(pos.iter().map(|&i| seq.ids()[i]), bits)).collect())
}

pub fn depacketize(plan: &PacketPlan, q: u32, payloads: &[Vec<bool>]) -> Result<TokenSequence, LinkError> {
    if payloads.len() != plan.len() {
        return Err(LinkError::BadPlan(format!("{} payloads for {} packets", payloads.len(), plan.len())));
    }
    let mut ids = vec![0u32; plan.sequence_len()];
    for (positions, bits) in plan.packets().iter().zip(payloads) {
        let decoded = bits_to_ids(bits, q);
        if decoded.len() != positions.len() {
            return Err(LinkError::BadPlan("payload length does not match its packet".into()));
        }
        for (&pos, id) in positions.iter().zip(decoded) {
            ids[pos] = id;
        }
    }
    Ok(TokenSequence::new(q, ids)?)
}
