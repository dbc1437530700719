//! Packetization, retransmission policies, MCS adaptation and run
//! orchestration.

mod channel;
mod mcs;
mod plan;

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

pub use channel::{ChannelOutput, CleanChannel, ForcedPerChannel, PacketChannel, PhyChannel, TxId};
pub use mcs::{mcs_select, McsEntry, McsPolicy, McsTable};
pub use plan::{bits_to_ids, depacketize, ids_to_bits, packetize, payloads_for, PacketPlan};

use crate::metrics::{compute_time, ComputeProfile, Measured};
use crate::phy::PhyError;
use crate::predictor::{fill, FillMode, FillSchedule, PredictError, ProbModel};
use crate::tokens::{MaskedSequence, SideInfo, Slot, TokenSequence, TokensError};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("invalid packet plan: {0}")]
    BadPlan(String),
    #[error("invalid policy: {0}")]
    BadPolicy(String),
    #[error("invalid MCS table: {0}")]
    BadMcs(String),
    #[error("a probability model is required for {0}")]
    ModelRequired(&'static str),
    #[error("packet {packet} not delivered after {attempts} attempts")]
    RetransmissionLimit { packet: usize, attempts: u32 },
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Tokens(#[from] TokensError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArqPolicy {
    /// Retransmit every packet until its CRC passes.
    FullReliable,
    /// Send once; mask lost positions and fill them from context.
    MaskAndPredict,
    /// As `MaskAndPredict`, then resend packets holding a filled token with
    /// confidence below `theta`, for up to `max_rounds` rounds.
    SelectiveRetx { theta: f64, max_rounds: u32 },
}

impl ArqPolicy {
    pub fn validate(&self) -> Result<(), LinkError> {
        if let Self::SelectiveRetx { theta, max_rounds } = *self {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(LinkError::BadPolicy(format!("theta must lie in (0, 1), got {theta}")));
            }
            if max_rounds == 0 {
                return Err(LinkError::BadPolicy("max_rounds must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::FullReliable => "full_reliable",
            Self::MaskAndPredict => "mask_and_predict",
            Self::SelectiveRetx { .. } => "selective_retx",
        }
    }

    fn fills(&self) -> bool {
        !matches!(self, Self::FullReliable)
    }
}

/// Knobs of one [`transmit`] call.
#[derive(Debug, Clone)]
pub struct TransmitConfig {
    pub policy: ArqPolicy,
    pub mcs: McsPolicy,
    /// SNR used for MCS lookup.
    pub snr_db: f64,
    pub schedule: FillSchedule,
    pub fill_mode: FillMode,
    pub run_id: u64,
    /// Cap on transmissions of a single packet.
    pub max_attempts: u32,
    /// Pixels per item, `h·w`, for TCE.
    pub pixels: u64,
    pub bandwidth_hz: f64,
    pub compute: Option<ComputeProfile<f64>>,
}

impl TransmitConfig {
    pub fn new(policy: ArqPolicy) -> Self {
        Self {
            policy,
            mcs: McsPolicy::default(),
            snr_db: 0.0,
            schedule: FillSchedule::default(),
            fill_mode: FillMode::Argmax,
            run_id: 0,
            max_attempts: 1000,
            pixels: 256 * 256,
            bandwidth_hz: crate::phy::DEFAULT_BANDWIDTH_HZ,
            compute: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketLog {
    pub packet_id: usize,
    pub positions: Vec<usize>,
    pub mcs: String,
    /// CRC status of the last transmission.
    pub crc_ok: bool,
    pub retx_count: u32,
    pub tokens_sent: Vec<u32>,
    /// Tokens from the first transmission, CRC notwithstanding.
    pub tokens_decoded: Vec<u32>,
    /// Whether the positions were filled by prediction.
    pub masked: bool,
    pub filled_ids: Vec<u32>,
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkReport {
    pub per: f64,
    pub ter_before: f64,
    pub ter_after: f64,
    pub t_avg: f64,
    pub transmissions: u64,
    pub failures: u64,
    pub total_symbols: u64,
    pub payload_bits: u64,
    pub tce: f64,
    pub bpp: f64,
    pub comm_time_s: f64,
    pub compute_time_s: f64,
    pub packets: Vec<PacketLog>,
}

impl LinkReport {
    pub fn measured(&self) -> Measured<f64> {
        Measured { per: self.per, ter_before: self.ter_before, ter_after: self.ter_after, t_avg: self.t_avg }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitOutput {
    pub report: LinkReport,
    pub recovered: TokenSequence,
}

/// Mean top-1 leave-one-out probability of each packet's tokens.
pub fn packet_predictability(
    model: &dyn ProbModel,
    seq: &TokenSequence,
    plan: &PacketPlan,
    side: &SideInfo,
) -> Result<Vec<f64>, LinkError> {
    let slots: Vec<Slot> = seq.ids().iter().map(|&i| Slot::Known(i)).collect();
    let all: Vec<usize> = (0..seq.len()).collect();
    let top: Vec<f64> = model
        .predict_many(&slots, &all, side)?
        .into_iter()
        .map(|p| p.probs.iter().copied().fold(0.0, f64::max))
        .collect();
    Ok(plan.packets().iter().map(|pos| pos.iter().map(|&i| top[i]).sum::<f64>() / pos.len() as f64).collect())
}

struct PacketState {
    mcs: McsEntry,
    transmissions: u32,
    failures: u32,
    symbols: u64,
    payload_bits: u64,
    first: Vec<u32>,
    delivered: Option<Vec<u32>>,
    last_ok: bool,
}

struct Sender<'a> {
    channel: &'a dyn PacketChannel,
    payloads: &'a [Vec<bool>],
    q: u32,
    run: u64,
}

impl Sender<'_> {
    fn send(&self, st: &mut PacketState, packet: usize) -> Result<(), LinkError> {
        let tx = TxId { run: self.run, attempt: st.transmissions, packet: packet as u32 };
        let out = self.channel.send(&self.payloads[packet], &st.mcs, tx)?;
        let ids = bits_to_ids(&out.bits, self.q);
        if st.transmissions == 0 {
            st.first = ids.clone();
        }
        st.transmissions += 1;
        st.symbols += out.symbols as u64;
        st.payload_bits += self.payloads[packet].len() as u64;
        st.last_ok = out.crc_ok;
        if out.crc_ok {
            st.delivered = Some(ids);
        } else {
            st.failures += 1;
        }
        Ok(())
    }
}

/// Sends `seq` over `channel` packet by packet under `cfg.policy`.
///
/// `model` is required by the predicting policies and by adaptive MCS.
pub fn transmit(
    seq: &TokenSequence,
    side: &SideInfo,
    plan: &PacketPlan,
    channel: &dyn PacketChannel,
    model: Option<&dyn ProbModel>,
    cfg: &TransmitConfig,
) -> Result<TransmitOutput, LinkError> {
    cfg.policy.validate()?;
    let payloads = payloads_for(plan, seq)?;
    let need_model = |what| model.ok_or(LinkError::ModelRequired(what));
    if cfg.policy.fills() {
        let m = need_model(cfg.policy.name())?;
        if !m.capabilities().bidirectional {
            return Err(PredictError::NotBidirectional.into());
        }
    }
    let predictability = if cfg.mcs.is_adaptive() {
        packet_predictability(need_model("adaptive MCS")?, seq, plan, side)?
    } else {
        vec![0.0; plan.len()]
    };

    let sender = Sender { channel, payloads: &payloads, q: seq.q(), run: cfg.run_id };
    let mut states: Vec<PacketState> = predictability
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut st = PacketState {
                mcs: *mcs_select(&cfg.mcs, cfg.snr_db, r),
                transmissions: 0,
                failures: 0,
                symbols: 0,
                payload_bits: 0,
                first: Vec::new(),
                delivered: None,
                last_ok: false,
            };
            sender.send(&mut st, i)?;
            if cfg.policy == ArqPolicy::FullReliable {
                while st.delivered.is_none() {
                    if st.transmissions >= cfg.max_attempts {
                        return Err(LinkError::RetransmissionLimit { packet: i, attempts: st.transmissions });
                    }
                    sender.send(&mut st, i)?;
                }
            }
            Ok(st)
        })
        .collect::<Result<_, LinkError>>()?;

    let mut filled = None;
    let mut fill_used = false;
    if cfg.policy.fills() {
        let model = need_model(cfg.policy.name())?;
        filled = fill_missing(model, seq, side, plan, &states, cfg)?;
        fill_used |= filled.is_some();
        if let ArqPolicy::SelectiveRetx { theta, max_rounds } = cfg.policy {
            for _ in 0..max_rounds {
                let Some(out) = &filled else { break };
                let weak: Vec<usize> = plan
                    .packets()
                    .iter()
                    .enumerate()
                    .filter(|(i, pos)| {
                        states[*i].delivered.is_none() && pos.iter().any(|&p| out.confidence[p].is_some_and(|c| c < theta))
                    })
                    .map(|(i, _)| i)
                    .collect();
                if weak.is_empty() {
                    break;
                }
                for i in weak {
                    sender.send(&mut states[i], i)?;
                }
                filled = fill_missing(model, seq, side, plan, &states, cfg)?;
            }
        }
    }

    let n = seq.len();
    let mut before = vec![0u32; n];
    let mut after = vec![0u32; n];
    let mut logs = Vec::with_capacity(plan.len());
    for (i, (pos, st)) in plan.packets().iter().zip(&states).enumerate() {
        let mut filled_ids = Vec::new();
        let mut confidences = Vec::new();
        for (k, &p) in pos.iter().enumerate() {
            before[p] = st.first[k];
            after[p] = match (&st.delivered, &filled) {
                (Some(ids), _) => ids[k],
                (None, Some(out)) => {
                    filled_ids.push(out.sequence.ids()[p]);
                    confidences.push(out.confidence[p].unwrap_or(f64::NAN));
                    out.sequence.ids()[p]
                }
                (None, None) => st.first[k],
            };
        }
        logs.push(PacketLog {
            packet_id: i,
            positions: pos.clone(),
            mcs: st.mcs.name(),
            crc_ok: st.last_ok,
            retx_count: st.transmissions - 1,
            tokens_sent: pos.iter().map(|&p| seq.ids()[p]).collect(),
            tokens_decoded: st.first.clone(),
            masked: st.delivered.is_none() && filled.is_some(),
            filled_ids,
            confidences,
        });
    }

    let mismatch = |ids: &[u32]| ids.iter().zip(seq.ids()).filter(|(a, b)| a != b).count() as f64 / n as f64;
    let transmissions: u64 = states.iter().map(|s| s.transmissions as u64).sum();
    let failures: u64 = states.iter().map(|s| s.failures as u64).sum();
    let total_symbols: u64 = states.iter().map(|s| s.symbols).sum();
    let t_avg = transmissions as f64 / plan.len() as f64;
    let tce = cfg.pixels as f64 / (t_avg * n as f64 * (seq.q() as f64).log2());
    let report = LinkReport {
        per: failures as f64 / transmissions as f64,
        ter_before: mismatch(&before),
        ter_after: mismatch(&after),
        t_avg,
        transmissions,
        failures,
        total_symbols,
        payload_bits: states.iter().map(|s| s.payload_bits).sum(),
        tce,
        bpp: 1.0 / tce,
        comm_time_s: total_symbols as f64 / cfg.bandwidth_hz,
        compute_time_s: match (&cfg.compute, fill_used) {
            (Some(p), true) => compute_time(p),
            _ => 0.0,
        },
        packets: logs,
    };
    Ok(TransmitOutput { report, recovered: TokenSequence::new(seq.q(), after)? })
}

fn fill_missing(
    model: &dyn ProbModel,
    seq: &TokenSequence,
    side: &SideInfo,
    plan: &PacketPlan,
    states: &[PacketState],
    cfg: &TransmitConfig,
) -> Result<Option<crate::predictor::FillOutput>, LinkError> {
    let mut slots = vec![Slot::Masked; seq.len()];
    let mut any_masked = false;
    for (pos, st) in plan.packets().iter().zip(states) {
        match &st.delivered {
            Some(ids) => pos.iter().zip(ids).for_each(|(&p, &id)| slots[p] = Slot::Known(id)),
            None => any_masked = true,
        }
    }
    if !any_masked {
        return Ok(None);
    }
    let masked = MaskedSequence::new(seq.q(), slots)?;
    Ok(Some(fill(model, &masked, side, &cfg.schedule, cfg.fill_mode)?))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// Writes the per-packet log as CSV; list cells are `;`-separated.
pub fn write_packet_log<W: Write>(mut w: W, run_id: u64, logs: &[PacketLog], header: bool) -> std::io::Result<()> {
    if header {
        writeln!(
            w,
            "run_id,packet_id,positions,mcs,crc_ok,retx_count,tokens_sent,tokens_decoded,masked,filled_ids,confidences"
        )?;
    }
    for l in logs {
        writeln!(
            w,
            "{run_id},{},{},{},{},{},{},{},{},{},{}",
            l.packet_id,
            join(&l.positions),
            l.mcs,
            l.crc_ok,
            l.retx_count,
            join(&l.tokens_sent),
            join(&l.tokens_decoded),
            l.masked,
            join(&l.filled_ids),
            join(&l.confidences),
        )?;
    }
    Ok(())
}
