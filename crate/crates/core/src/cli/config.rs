//! Experiment configuration schema.

use serde::{Deserialize, Serialize};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: SourceCfg,
    pub predictor: PredictorCfg,
    pub phy: PhyCfg,
    pub link: LinkCfg,
    pub sweep: SweepCfg,
    pub metrics: MetricsCfg,
    pub semmap: SemmapCfg,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Sticky,
    Uniform,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceCfg {
    pub kind: SourceKind,
    pub q: u32,
    pub stay: f64,
    /// One stay probability per class label; enables class-conditional
    /// sources with a 7-bit label.
    pub class_stays: Vec<f64>,
    /// Tokens per sequence.
    pub n: usize,
    /// Sequences per simulated cell or generated corpus.
    pub sequences: usize,
}

impl Default for SourceCfg {
    fn default() -> Self {
        Self { kind: SourceKind::Sticky, q: 1024, stay: 0.9, class_stays: Vec::new(), n: 256, sequences: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Exact law of the configured source.
    Exact,
    /// Markov model trained on sequences drawn from the source.
    Markov,
    Unigram,
    Uniform,
    /// Markov model loaded from `model_path`.
    File,
    /// External service over the JSON-lines bridge.
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorCfg {
    pub kind: PredictorKind,
    pub order: usize,
    pub alpha: f64,
    pub train_sequences: usize,
    pub model_path: Option<String>,
    /// Model of the reversed sequences, paired with `model_path` for
    /// bidirectional prediction.
    pub backward_model_path: Option<String>,
    /// `host:port` of a running bridge service.
    pub address: Option<String>,
    /// Program and arguments that start a bridge service on stdio.
    pub command: Vec<String>,
    pub fill_iterations: usize,
}

impl Default for PredictorCfg {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Exact,
            order: 1,
            alpha: 0.1,
            train_sequences: 200,
            model_path: None,
            backward_model_path: None,
            address: None,
            command: Vec::new(),
            fill_iterations: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    Forced,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhyCfg {
    pub channel: ChannelKind,
    /// Es/N0 per symbol in dB.
    pub snr_db: f64,
    pub forced_per: f64,
    pub modulation: usize,
    pub constraint_length: u32,
    /// Generator polynomials as octal strings.
    pub generators: [String; 2],
    pub bandwidth_hz: f64,
    /// Assignment CSV used to relabel the constellation.
    pub labels_path: Option<String>,
}

impl Default for PhyCfg {
    fn default() -> Self {
        Self {
            channel: ChannelKind::Awgn,
            snr_db: 6.0,
            forced_per: 0.0,
            modulation: 16,
            constraint_length: 7,
            generators: ["171".into(), "133".into()],
            bandwidth_hz: crate::phy::DEFAULT_BANDWIDTH_HZ,
            labels_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    FullReliable,
    MaskAndPredict,
    SelectiveRetx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McsKind {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkCfg {
    pub tokens_per_packet: usize,
    pub interleave: bool,
    pub policy: PolicyKind,
    pub theta: f64,
    pub max_rounds: u32,
    pub mcs: McsKind,
    pub max_attempts: u32,
    pub packet_log: bool,
}

impl Default for LinkCfg {
    fn default() -> Self {
        Self {
            tokens_per_packet: 4,
            interleave: true,
            policy: PolicyKind::MaskAndPredict,
            theta: 0.5,
            max_rounds: 3,
            mcs: McsKind::Fixed,
            max_attempts: 1000,
            packet_log: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepCfg {
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepCfg {
    fn default() -> Self {
        Self { snr_db: vec![6.0, 6.5, 7.0, 7.5, 8.0, 9.0], seeds: vec![0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsCfg {
    pub h: u64,
    pub w: u64,
    pub workload_tflops: f64,
    pub device_tops: f64,
    pub precision_factor: f64,
}

impl Default for MetricsCfg {
    fn default() -> Self {
        Self { h: 256, w: 256, workload_tflops: 0.8, device_tops: 1000.0, precision_factor: 24.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Random,
    Clusters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemmapMethodKind {
    Greedy,
    Anneal,
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfusionKind {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemmapCfg {
    /// Number of points; QAM for 4, 16 and 64, otherwise PSK.
    pub order: usize,
    pub psk: bool,
    pub snr_db: f64,
    pub embedding: EmbeddingKind,
    pub dim: usize,
    pub clusters: usize,
    pub method: SemmapMethodKind,
    pub restarts: usize,
    pub steps: usize,
    pub cooling: f64,
    pub confusion: ConfusionKind,
    pub trials: u64,
}

impl Default for SemmapCfg {
    fn default() -> Self {
        Self {
            order: 16,
            psk: false,
            snr_db: 6.0,
            embedding: EmbeddingKind::Clusters,
            dim: 8,
            clusters: 2,
            method: SemmapMethodKind::Anneal,
            restarts: 8,
            steps: 20_000,
            cooling: 0.999,
            confusion: ConfusionKind::Analytic,
            trials: 100_000,
        }
    }
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn check(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(schema(msg))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn generators(&self) -> Result<(u32, u32), CliError> {
        let parse = |s: &str| u32::from_str_radix(s, 8).map_err(|_| schema(format!("generator {s:?} is not octal")));
        Ok((parse(&self.phy.generators[0])?, parse(&self.phy.generators[1])?))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.source;
        check(s.q >= 2, "source.q must be at least 2")?;
        check((0.0..=1.0).contains(&s.stay), "source.stay must lie in [0, 1]")?;
        check(s.class_stays.iter().all(|v| (0.0..=1.0).contains(v)), "source.class_stays must lie in [0, 1]")?;
        check(s.class_stays.len() <= 128, "at most 128 classes fit a 7-bit label")?;
        check(s.n >= 1 && s.sequences >= 1, "source.n and source.sequences must be positive")?;

        let p = &self.predictor;
        check(p.alpha > 0.0 && p.alpha.is_finite(), "predictor.alpha must be positive")?;
        check(p.order >= 1, "predictor.order must be at least 1")?;
        check(p.fill_iterations >= 1, "predictor.fill_iterations must be at least 1")?;
        check(p.kind != PredictorKind::File || p.model_path.is_some(), "predictor.model_path is required")?;
        check(
            p.kind != PredictorKind::Bridge || p.address.is_some() || !p.command.is_empty(),
            "bridge predictor needs an address or a command",
        )?;

        let ph = &self.phy;
        check(ph.snr_db.is_finite(), "phy.snr_db must be finite")?;
        check((0.0..1.0).contains(&ph.forced_per), "phy.forced_per must lie in [0, 1)")?;
        check([2, 4, 16, 64].contains(&ph.modulation), "phy.modulation must be 2, 4, 16 or 64")?;
        check(ph.bandwidth_hz > 0.0 && ph.bandwidth_hz.is_finite(), "phy.bandwidth_hz must be positive")?;
        let (g0, g1) = self.generators()?;
        crate::phy::ConvCode::new(ph.constraint_length, g0, g1).map_err(|e| schema(e.to_string()))?;

        let l = &self.link;
        check(l.tokens_per_packet >= 1, "link.tokens_per_packet must be positive")?;
        check(l.theta > 0.0 && l.theta < 1.0, "link.theta must lie in (0, 1)")?;
        check(l.max_rounds >= 1 && l.max_attempts >= 1, "link.max_rounds and link.max_attempts must be positive")?;

        check(!self.sweep.snr_db.is_empty(), "sweep.snr_db must not be empty")?;
        check(self.sweep.snr_db.iter().all(|v| v.is_finite()), "sweep.snr_db must be finite")?;
        check(!self.sweep.seeds.is_empty(), "sweep.seeds must not be empty")?;

        let m = &self.metrics;
        check(m.h > 0 && m.w > 0, "metrics.h and metrics.w must be positive")?;
        check(m.workload_tflops >= 0.0 && m.device_tops > 0.0 && m.precision_factor > 0.0, "invalid compute profile")?;

        let sm = &self.semmap;
        check(sm.order >= 2 && sm.order <= 64, "semmap.order must lie in 2..=64")?;
        check(sm.psk || [2, 4, 16, 64].contains(&sm.order), "non-PSK semmap.order must be 2, 4, 16 or 64")?;
        check(sm.method != SemmapMethodKind::BruteForce || sm.order <= 8, "brute force needs semmap.order ≤ 8")?;
        check(sm.dim >= 1 && sm.clusters >= 1 && sm.restarts >= 1, "semmap.dim, clusters, restarts must be positive")?;
        check(sm.cooling > 0.0 && sm.cooling < 1.0, "semmap.cooling must lie in (0, 1)")?;
        check(sm.trials >= 1, "semmap.trials must be positive")?;
        check(sm.snr_db.is_finite(), "semmap.snr_db must be finite")?;
        Ok(())
    }
}
