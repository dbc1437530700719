use rand::Rng;

use super::{LinkError, McsEntry};
use crate::phy::{packet_symbols, send_packet, ChannelCfg, Constellation};
use crate::rng::{derive_seed, substream, Purpose};

/// Identifies one transmission attempt of one packet within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxId {
    pub run: u64,
    pub attempt: u32,
    pub packet: u32,
}

impl TxId {
    fn stream_index(&self) -> u64 {
        ((self.attempt as u64) << 24) | (self.packet as u64 & 0xFF_FFFF)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelOutput {
    pub bits: Vec<bool>,
    pub crc_ok: bool,
    pub symbols: usize,
}

/// Delivers one packet payload.
pub trait PacketChannel: Send + Sync {
    fn send(&self, payload: &[bool], mcs: &McsEntry, tx: TxId) -> Result<ChannelOutput, LinkError>;
}

/// Full physical-layer chain over AWGN.
#[derive(Debug, Clone)]
pub struct PhyChannel {
    cfg: ChannelCfg<f64>,
    labels: Option<Vec<usize>>,
}

impl PhyChannel {
    pub fn new(cfg: ChannelCfg<f64>) -> Self {
        Self { cfg, labels: None }
    }

    /// Relabels every constellation with `assignment` (see
    /// [`Constellation::relabeled`]).
    pub fn with_labels(mut self, assignment: Vec<usize>) -> Self {
        self.labels = Some(assignment);
        self
    }

    pub fn cfg(&self) -> &ChannelCfg<f64> {
        &self.cfg
    }
}

impl PacketChannel for PhyChannel {
    fn send(&self, payload: &[bool], mcs: &McsEntry, tx: TxId) -> Result<ChannelOutput, LinkError> {
        let mut constellation = Constellation::new(mcs.order)?;
        if let Some(labels) = &self.labels {
            constellation = constellation.relabeled(labels)?;
        }
        let cfg = ChannelCfg { seed: derive_seed(self.cfg.seed, tx.run), ..self.cfg };
        let out = send_packet(payload, &mcs.code, &constellation, &cfg, tx.stream_index())?;
        Ok(ChannelOutput { bits: out.bits, crc_ok: out.crc_ok, symbols: out.symbols })
    }
}

/// Coin-flip channel: each transmission fails with probability `per`, and a
/// failed transmission delivers uniformly random bits.
#[derive(Debug, Clone, Copy)]
pub struct ForcedPerChannel {
    per: f64,
    seed: u64,
}

impl ForcedPerChannel {
    pub fn new(per: f64, seed: u64) -> Result<Self, LinkError> {
        if !(0.0..1.0).contains(&per) {
            return Err(LinkError::BadPolicy(format!("forced PER must lie in [0, 1), got {per}")));
        }
        Ok(Self { per, seed })
    }
}

impl PacketChannel for ForcedPerChannel {
    fn send(&self, payload: &[bool], mcs: &McsEntry, tx: TxId) -> Result<ChannelOutput, LinkError> {
        let mut rng = substream(derive_seed(self.seed, tx.run), Purpose::ForcedChannel, tx.stream_index());
        let errored = rng.random::<f64>() < self.per;
        let bits = if errored { (0..payload.len()).map(|_| rng.random()).collect() } else { payload.to_vec() };
        Ok(ChannelOutput {
            bits,
            crc_ok: !errored,
            symbols: packet_symbols(payload.len(), &mcs.code, mcs.bits_per_symbol()),
        })
    }
}

/// Error-free delivery.
#[derive(Debug, Clone, Copy, Default)]
pub struct CleanChannel;

impl PacketChannel for CleanChannel {
    fn send(&self, payload: &[bool], mcs: &McsEntry, _tx: TxId) -> Result<ChannelOutput, LinkError> {
        Ok(ChannelOutput {
            bits: payload.to_vec(),
            crc_ok: true,
            symbols: packet_symbols(payload.len(), &mcs.code, mcs.bits_per_symbol()),
        })
    }
}
