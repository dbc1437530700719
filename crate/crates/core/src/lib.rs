//! Link-level simulation of token communications.
//!
//! Token sequences are packetized, protected with CRC and a convolutional
//! code, sent over an AWGN channel with Gray-mapped QAM and decoded with a
//! soft Viterbi decoder. Lost packets are either retransmitted or recovered
//! by masked-token prediction from context, and the resulting efficiency and
//! latency are accounted for in closed form.

pub mod cli;
pub mod entropy_coding;
pub mod link;
pub mod metrics;
pub mod phy;
pub mod predictor;
pub mod rng;
pub mod scalar;
pub mod semmap;
pub mod tokens;

/// Exact rational scalar for closed-form accounting.
pub type Rational = num_rational::Ratio<i64>;

pub type Params = metrics::SystemParams<f64>;
pub type ExactParams = metrics::SystemParams<Rational>;
pub type Profile = metrics::ComputeProfile<f64>;
pub type ExactProfile = metrics::ComputeProfile<Rational>;
pub type Constellation = phy::Constellation<f64>;
pub type Constellation32 = phy::Constellation<f32>;
pub type ChannelCfg = phy::ChannelCfg<f64>;
pub type ConfusionMatrix = semmap::ConfusionMatrix<f64>;
pub type SemanticDistance = semmap::SemanticDistance<f64>;
